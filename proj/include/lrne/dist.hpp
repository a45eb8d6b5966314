#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lrne/envs.hpp"
#include "lrne/evolve.hpp"
#include "lrne/genome.hpp"

namespace lrne {

/// Wire protocol. Every message is a frame: u32 LE length | u8 type |
/// payload, where length counts the type byte plus the payload. Payload
/// layouts (all little-endian):
///   HELLO            u32 protocol version (currently 1)
///   ARCH             task bundle JSON (architecture + environment), sent
///                    once per connection after HELLO
///   EVAL_REQUEST     genome_id u64 | parent_id u64 | seed u64 | sigma f32
///                    | flags u32 | stage u16 | n_seeds u16 | step_cap u32
///                    | env seeds u64 x n  (frame size 45 + 8n bytes,
///                    independent of model size and lineage depth)
///   EVAL_RESULT      genome_id u64 | stage u16 | pad u16 | env_steps u64
///                    | fitness f64 (IEEE-754 bits, exact)
///   SURVIVORS        count u32 | genome ids u64 x count
///   SHUTDOWN         empty
///   LINEAGE_REQUEST  genome_id u64
///   LINEAGE          genome JSON (full seed chain; cache-miss recovery)
enum class FrameType : std::uint8_t {
  hello = 1,
  arch = 2,
  eval_request = 3,
  eval_result = 4,
  survivors = 5,
  shutdown = 6,
  lineage_request = 7,
  lineage = 8,
};

struct Frame {
  FrameType type = FrameType::hello;
  std::vector<std::uint8_t> payload;
};

inline constexpr std::size_t kFrameHeaderBytes = 5;  // u32 length + u8 type
inline constexpr std::uint32_t kProtocolVersion = 1;

/// EVAL_REQUEST frame size for a job with n episode seeds.
inline constexpr std::size_t eval_request_frame_bytes(std::size_t n_seeds) {
  return kFrameHeaderBytes + 40 + 8 * n_seeds;
}
inline constexpr std::size_t kEvalResultFrameBytes = kFrameHeaderBytes + 28;

/// Blocking frame IO on a connected socket. read_frame returns false on a
/// clean close; both throw std::runtime_error on a broken or malformed
/// stream.
bool read_frame(int fd, Frame& out);
void write_frame(int fd, const Frame& frame);
std::size_t frame_wire_size(const Frame& frame);

struct EvalRequest {
  std::uint64_t genome_id = 0;
  GenomeDelta delta;
  std::uint16_t stage = 0;
  std::uint32_t step_cap = 0;
  std::vector<std::uint64_t> env_seeds;
};

std::vector<std::uint8_t> encode_eval_request(const EvalRequest& req);
EvalRequest decode_eval_request(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_eval_result(const EvalOutcome& outcome);
EvalOutcome decode_eval_result(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_survivors(std::span<const std::uint64_t> ids);
std::vector<std::uint64_t> decode_survivors(std::span<const std::uint8_t> payload);

/// Everything a worker needs to evaluate: the architecture and the task.
/// For the LM task the corpus and any trained merge list ride along, so a
/// worker never touches the filesystem.
struct TaskBundle {
  ArchitectureSpec arch;
  std::string env_kind = "lm";  // "lm" | "tiletrack"
  LmTaskConfig lm;
  std::string corpus_text;
  std::string bpe_model_text;  // empty: byte mode or train locally
  TileTrackConfig track;
};

std::string task_bundle_to_json(const TaskBundle& bundle);
TaskBundle task_bundle_from_json(const std::string& json_text);
std::shared_ptr<FitnessEnv> make_env(const TaskBundle& bundle);

struct MasterConfig {
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  double straggler_timeout_s = 30.0;
};

/// Distributed evaluation backend: listens for workers, hands out
/// constant-size EVAL_REQUEST jobs, re-dispatches stragglers, requeues
/// jobs of lost workers, deduplicates results by (genome id, stage), and
/// answers lineage recovery requests from its genome table. Fitness values
/// are bit-equal to LocalEvaluator's for the same (genome, env seeds).
class MasterEvaluator : public Evaluator {
 public:
  MasterEvaluator(TaskBundle bundle, MasterConfig cfg = {});
  ~MasterEvaluator() override;

  MasterEvaluator(const MasterEvaluator&) = delete;
  MasterEvaluator& operator=(const MasterEvaluator&) = delete;

  std::vector<EvalOutcome> evaluate(const std::vector<const Genome*>& genomes,
                                    const EvalJobSpec& job) override;
  void notify_survivors(std::span<const std::uint64_t> survivor_ids) override;
  std::uint64_t take_bytes_transmitted() override;

  std::uint16_t port() const { return port_; }
  int worker_count() const;
  /// Waits until at least n workers finished the handshake.
  bool wait_for_workers(int n, double timeout_s);
  /// Broadcasts SHUTDOWN and tears the transport down (idempotent).
  void shutdown();

  std::uint64_t eval_request_bytes() const { return eval_request_bytes_.load(); }
  std::uint64_t handshake_bytes() const { return handshake_bytes_.load(); }

 private:
  struct Session {
    int fd = -1;
    std::thread thread;
    std::mutex write_mutex;
    bool ready = false;
    bool closed = false;
  };
  struct JobKey {
    std::uint64_t genome_id = 0;
    int stage = 0;
    bool operator<(const JobKey& o) const {
      return genome_id != o.genome_id ? genome_id < o.genome_id : stage < o.stage;
    }
  };

  void accept_loop();
  void session_loop(std::shared_ptr<Session> session);
  bool send_frame_to(Session& session, const Frame& frame);
  void requeue_locked(const JobKey& key);

  TaskBundle bundle_;
  std::string bundle_json_;
  MasterConfig cfg_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::atomic<bool> shutting_down_{false};

  mutable std::mutex mutex_;
  std::condition_variable job_cv_;
  std::condition_variable result_cv_;
  std::condition_variable worker_cv_;
  std::vector<std::shared_ptr<Session>> sessions_;
  int ready_workers_ = 0;
  std::deque<EvalRequest> queue_;
  std::map<JobKey, std::chrono::steady_clock::time_point> dispatched_;
  std::map<JobKey, EvalOutcome> results_;
  std::map<JobKey, EvalRequest> wanted_;
  std::unordered_map<std::uint64_t, Genome> genomes_;

  std::atomic<std::uint64_t> bytes_since_take_{0};
  std::atomic<std::uint64_t> eval_request_bytes_{0};
  std::atomic<std::uint64_t> handshake_bytes_{0};
};

struct WorkerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  /// Abruptly drops the connection after this many completed jobs
  /// (simulates a mid-generation crash); -1 runs until SHUTDOWN.
  int max_jobs = -1;
  double connect_timeout_s = 15.0;
};

enum class WorkerExit : int {
  clean_shutdown = 0,
  job_limit = 1,
  connection_lost = 2,
  protocol_error = 3,
};

/// Connects, handshakes, then serves EVAL_REQUESTs until SHUTDOWN:
/// develops children incrementally from the parent cache, recovers missing
/// parents via LINEAGE_REQUEST, evaluates, and replies with f64-exact
/// fitness. SURVIVORS frames prune the cache to exactly the listed ids.
WorkerExit run_worker(const WorkerConfig& cfg);

/// Worker message loop on an already-connected socket (HELLO not yet
/// sent); exposed for in-process loopback tests.
WorkerExit worker_session(int fd, int max_jobs);

/// One parsed run-log data row (schema documented in
/// docs/config_schema.md).
struct RunLogRow {
  int generation = 0;
  int stage = 0;
  int candidate_count = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double median_fitness = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t env_steps = 0;
  std::uint64_t bytes_transmitted = 0;
};

struct GenerationBandwidth {
  int generation = 0;
  std::uint64_t bytes = 0;
  std::uint64_t evaluations = 0;
};

/// Transmission accounting over a finished run's log: actual bytes moved
/// per generation and per evaluation, against the hypothetical cost of
/// shipping the full phenotype (4 bytes per parameter) for every
/// evaluation instead.
struct BandwidthReport {
  std::vector<GenerationBandwidth> per_generation;
  std::uint64_t total_bytes = 0;
  std::uint64_t total_evaluations = 0;
  double bytes_per_evaluation = 0.0;
  std::uint64_t hypothetical_bytes_per_genome = 0;
  double hypothetical_total_bytes = 0.0;
};

BandwidthReport account_bandwidth(const std::vector<RunLogRow>& rows,
                                  std::uint64_t phenotype_params);

}  // namespace lrne
