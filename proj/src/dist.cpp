#include "lrne/dist.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "lrne/tokenizer.hpp"

namespace lrne {

namespace {

constexpr std::size_t kMaxFrameLength = 64u << 20;

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (static_cast<std::uint16_t>(b[off + 1]) << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

bool read_exact(int fd, std::uint8_t* buf, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, buf + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw std::runtime_error("connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (got == 0) return false;
      throw std::runtime_error("socket read failed");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

void write_all(int fd, const std::uint8_t* buf, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::send(fd, buf + sent, len - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("socket write failed");
    }
    sent += static_cast<std::size_t>(n);
  }
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

std::size_t frame_wire_size(const Frame& frame) {
  return kFrameHeaderBytes + frame.payload.size();
}

bool read_frame(int fd, Frame& out) {
  std::uint8_t header[5];
  if (!read_exact(fd, header, 4)) return false;
  const std::uint32_t length = get_u32(std::span<const std::uint8_t>(header, 4), 0);
  if (length < 1 || length > kMaxFrameLength) throw std::runtime_error("malformed frame length");
  if (!read_exact(fd, header + 4, 1)) throw std::runtime_error("connection closed mid-frame");
  out.type = static_cast<FrameType>(header[4]);
  out.payload.resize(length - 1);
  if (length > 1 && !read_exact(fd, out.payload.data(), length - 1))
    throw std::runtime_error("connection closed mid-frame");
  return true;
}

void write_frame(int fd, const Frame& frame) {
  std::vector<std::uint8_t> buf;
  buf.reserve(frame_wire_size(frame));
  put_u32(buf, static_cast<std::uint32_t>(1 + frame.payload.size()));
  buf.push_back(static_cast<std::uint8_t>(frame.type));
  buf.insert(buf.end(), frame.payload.begin(), frame.payload.end());
  write_all(fd, buf.data(), buf.size());
}

std::vector<std::uint8_t> encode_eval_request(const EvalRequest& req) {
  std::vector<std::uint8_t> b;
  b.reserve(40 + 8 * req.env_seeds.size());
  put_u64(b, req.genome_id);
  put_u64(b, req.delta.parent_id);
  put_u64(b, req.delta.seed);
  std::uint32_t sigma_bits = 0;
  static_assert(sizeof(float) == 4);
  std::memcpy(&sigma_bits, &req.delta.sigma, 4);
  put_u32(b, sigma_bits);
  put_u32(b, req.delta.flags);
  put_u16(b, req.stage);
  put_u16(b, static_cast<std::uint16_t>(req.env_seeds.size()));
  put_u32(b, req.step_cap);
  for (std::uint64_t s : req.env_seeds) put_u64(b, s);
  return b;
}

EvalRequest decode_eval_request(std::span<const std::uint8_t> payload) {
  if (payload.size() < 40) throw std::runtime_error("short EVAL_REQUEST payload");
  EvalRequest req;
  req.genome_id = get_u64(payload, 0);
  req.delta.parent_id = get_u64(payload, 8);
  req.delta.seed = get_u64(payload, 16);
  const std::uint32_t sigma_bits = get_u32(payload, 24);
  std::memcpy(&req.delta.sigma, &sigma_bits, 4);
  req.delta.flags = get_u32(payload, 28);
  req.stage = get_u16(payload, 32);
  const std::uint16_t n_seeds = get_u16(payload, 34);
  req.step_cap = get_u32(payload, 36);
  if (payload.size() != 40 + 8u * n_seeds) throw std::runtime_error("bad EVAL_REQUEST size");
  req.env_seeds.reserve(n_seeds);
  for (std::uint16_t i = 0; i < n_seeds; ++i) req.env_seeds.push_back(get_u64(payload, 40 + 8u * i));
  return req;
}

std::vector<std::uint8_t> encode_eval_result(const EvalOutcome& outcome) {
  std::vector<std::uint8_t> b;
  b.reserve(28);
  put_u64(b, outcome.genome_id);
  put_u16(b, static_cast<std::uint16_t>(outcome.stage));
  put_u16(b, 0);
  put_u64(b, outcome.env_steps);
  std::uint64_t fitness_bits = 0;
  static_assert(sizeof(double) == 8);
  std::memcpy(&fitness_bits, &outcome.fitness, 8);
  put_u64(b, fitness_bits);
  return b;
}

EvalOutcome decode_eval_result(std::span<const std::uint8_t> payload) {
  if (payload.size() != 28) throw std::runtime_error("bad EVAL_RESULT size");
  EvalOutcome o;
  o.genome_id = get_u64(payload, 0);
  o.stage = get_u16(payload, 8);
  o.env_steps = get_u64(payload, 12);
  const std::uint64_t fitness_bits = get_u64(payload, 20);
  std::memcpy(&o.fitness, &fitness_bits, 8);
  return o;
}

std::vector<std::uint8_t> encode_survivors(std::span<const std::uint64_t> ids) {
  std::vector<std::uint8_t> b;
  b.reserve(4 + 8 * ids.size());
  put_u32(b, static_cast<std::uint32_t>(ids.size()));
  for (std::uint64_t id : ids) put_u64(b, id);
  return b;
}

std::vector<std::uint64_t> decode_survivors(std::span<const std::uint8_t> payload) {
  if (payload.size() < 4) throw std::runtime_error("short SURVIVORS payload");
  const std::uint32_t count = get_u32(payload, 0);
  if (payload.size() != 4 + 8u * count) throw std::runtime_error("bad SURVIVORS size");
  std::vector<std::uint64_t> ids;
  ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) ids.push_back(get_u64(payload, 4 + 8u * i));
  return ids;
}

std::string task_bundle_to_json(const TaskBundle& bundle) {
  nlohmann::json j;
  j["arch"] = nlohmann::json::parse(arch_to_json(bundle.arch));
  j["env"]["kind"] = bundle.env_kind;
  if (bundle.env_kind == "lm") {
    j["env"]["vocab_size"] = bundle.lm.vocab_size;
    j["env"]["max_seq_len"] = bundle.lm.max_seq_len;
    j["env"]["n_sequences"] = bundle.lm.n_sequences;
    j["env"]["corpus"] = bundle.corpus_text;
    if (!bundle.bpe_model_text.empty()) j["env"]["bpe_model"] = bundle.bpe_model_text;
  } else if (bundle.env_kind == "tiletrack") {
    const TileTrackConfig& t = bundle.track;
    j["env"]["grid_w"] = t.grid_w;
    j["env"]["grid_h"] = t.grid_h;
    j["env"]["window"] = t.window;
    j["env"]["frame_stack"] = t.frame_stack;
    j["env"]["min_tiles"] = t.min_tiles;
    j["env"]["max_tiles"] = t.max_tiles;
    j["env"]["no_progress_limit"] = t.no_progress_limit;
    j["env"]["step_cap"] = t.step_cap;
    j["env"]["done_fraction"] = t.done_fraction;
  } else {
    throw std::invalid_argument("unknown environment kind: " + bundle.env_kind);
  }
  return j.dump();
}

TaskBundle task_bundle_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.contains("arch") || !j.contains("env"))
    throw std::invalid_argument("task bundle needs arch and env");
  TaskBundle bundle;
  bundle.arch = arch_from_json(j.at("arch").dump());
  const nlohmann::json& env = j.at("env");
  bundle.env_kind = env.at("kind").get<std::string>();
  if (bundle.env_kind == "lm") {
    bundle.lm.vocab_size = env.at("vocab_size").get<int>();
    bundle.lm.max_seq_len = env.at("max_seq_len").get<int>();
    bundle.lm.n_sequences = env.at("n_sequences").get<int>();
    bundle.corpus_text = env.at("corpus").get<std::string>();
    if (env.contains("bpe_model")) bundle.bpe_model_text = env.at("bpe_model").get<std::string>();
  } else if (bundle.env_kind == "tiletrack") {
    TileTrackConfig& t = bundle.track;
    t.grid_w = env.at("grid_w").get<int>();
    t.grid_h = env.at("grid_h").get<int>();
    t.window = env.at("window").get<int>();
    t.frame_stack = env.at("frame_stack").get<int>();
    t.min_tiles = env.at("min_tiles").get<int>();
    t.max_tiles = env.at("max_tiles").get<int>();
    t.no_progress_limit = env.at("no_progress_limit").get<int>();
    t.step_cap = env.at("step_cap").get<std::uint32_t>();
    t.done_fraction = env.at("done_fraction").get<double>();
  } else {
    throw std::invalid_argument("unknown environment kind: " + bundle.env_kind);
  }
  return bundle;
}

std::shared_ptr<FitnessEnv> make_env(const TaskBundle& bundle) {
  if (bundle.env_kind == "lm") {
    if (!bundle.bpe_model_text.empty())
      return std::make_shared<LmEnv>(bundle.corpus_text, bundle.lm,
                                     bpe_from_text(bundle.bpe_model_text));
    return std::make_shared<LmEnv>(bundle.corpus_text, bundle.lm);
  }
  if (bundle.env_kind == "tiletrack") return std::make_shared<TileTrackEnv>(bundle.track);
  throw std::invalid_argument("unknown environment kind: " + bundle.env_kind);
}

MasterEvaluator::MasterEvaluator(TaskBundle bundle, MasterConfig cfg)
    : bundle_(std::move(bundle)), cfg_(cfg) {
  bundle_json_ = task_bundle_to_json(bundle_);

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("cannot create listen socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(cfg_.port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("cannot bind master port");
  }
  socklen_t addr_len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &addr_len);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("cannot listen on master port");
  }
  accept_thread_ = std::thread([this] { accept_loop(); });
}

MasterEvaluator::~MasterEvaluator() { shutdown(); }

void MasterEvaluator::accept_loop() {
  while (!shutting_down_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 200);
    if (shutting_down_.load()) break;
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    auto session = std::make_shared<Session>();
    session->fd = fd;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      sessions_.push_back(session);
    }
    session->thread = std::thread([this, session] { session_loop(session); });
  }
}

bool MasterEvaluator::send_frame_to(Session& session, const Frame& frame) {
  std::lock_guard<std::mutex> lock(session.write_mutex);
  if (session.closed) return false;
  try {
    write_frame(session.fd, frame);
  } catch (const std::exception&) {
    return false;
  }
  bytes_since_take_.fetch_add(frame_wire_size(frame));
  return true;
}

void MasterEvaluator::requeue_locked(const JobKey& key) {
  const auto wanted_it = wanted_.find(key);
  if (wanted_it == wanted_.end() || results_.count(key)) return;
  queue_.push_back(wanted_it->second);
  dispatched_.erase(key);
  job_cv_.notify_one();
}

void MasterEvaluator::session_loop(std::shared_ptr<Session> session) {
  std::optional<JobKey> in_flight;
  const auto drop = [&] {
    std::lock_guard<std::mutex> lock(mutex_);
    {
      std::lock_guard<std::mutex> wl(session->write_mutex);
      if (!session->closed) {
        ::close(session->fd);
        session->closed = true;
      }
    }
    if (session->ready) {
      session->ready = false;
      --ready_workers_;
    }
    if (in_flight) requeue_locked(*in_flight);
  };

  try {
    Frame frame;
    if (!read_frame(session->fd, frame) || frame.type != FrameType::hello) {
      drop();
      return;
    }
    handshake_bytes_.fetch_add(frame_wire_size(frame));
    Frame arch_frame;
    arch_frame.type = FrameType::arch;
    arch_frame.payload.assign(bundle_json_.begin(), bundle_json_.end());
    {
      std::lock_guard<std::mutex> lock(session->write_mutex);
      write_frame(session->fd, arch_frame);
    }
    handshake_bytes_.fetch_add(frame_wire_size(arch_frame));
    {
      std::lock_guard<std::mutex> lock(mutex_);
      session->ready = true;
      ++ready_workers_;
      worker_cv_.notify_all();
    }

    while (!shutting_down_.load()) {
      EvalRequest req;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        job_cv_.wait(lock, [&] { return shutting_down_.load() || !queue_.empty(); });
        if (shutting_down_.load()) break;
        req = queue_.front();
        queue_.pop_front();
        const JobKey key{req.genome_id, req.stage};
        if (results_.count(key)) continue;  // straggler already answered
        dispatched_[key] = std::chrono::steady_clock::now();
        in_flight = key;
      }

      Frame out;
      out.type = FrameType::eval_request;
      out.payload = encode_eval_request(req);
      if (!send_frame_to(*session, out)) break;
      eval_request_bytes_.fetch_add(frame_wire_size(out));

      bool got_result = false;
      while (!got_result) {
        Frame in;
        if (!read_frame(session->fd, in)) throw std::runtime_error("worker closed");
        bytes_since_take_.fetch_add(frame_wire_size(in));
        if (in.type == FrameType::lineage_request) {
          if (in.payload.size() != 8) throw std::runtime_error("bad LINEAGE_REQUEST");
          const std::uint64_t id = get_u64(in.payload, 0);
          std::string text;
          {
            std::lock_guard<std::mutex> lock(mutex_);
            const auto it = genomes_.find(id);
            if (it == genomes_.end()) throw std::runtime_error("lineage request for unknown genome");
            text = genome_to_json(it->second);
          }
          Frame reply;
          reply.type = FrameType::lineage;
          reply.payload.assign(text.begin(), text.end());
          if (!send_frame_to(*session, reply)) throw std::runtime_error("worker closed");
        } else if (in.type == FrameType::eval_result) {
          const EvalOutcome outcome = decode_eval_result(in.payload);
          const JobKey key{outcome.genome_id, outcome.stage};
          std::lock_guard<std::mutex> lock(mutex_);
          dispatched_.erase(key);
          if (in_flight && key.genome_id == in_flight->genome_id && key.stage == in_flight->stage)
            in_flight.reset();
          if (wanted_.count(key) && !results_.count(key)) {
            results_.emplace(key, outcome);
            result_cv_.notify_all();
          }
          got_result = true;
        } else {
          throw std::runtime_error("unexpected frame from worker");
        }
      }
    }
  } catch (const std::exception&) {
    // fall through to drop
  }
  if (shutting_down_.load()) {
    // Say goodbye from this thread so the frame is queued before drop()
    // closes the socket; a broadcast from the shutdown thread can lose
    // that race and leave the worker staring at a bare EOF.
    Frame bye;
    bye.type = FrameType::shutdown;
    send_frame_to(*session, bye);
  }
  drop();
}

std::vector<EvalOutcome> MasterEvaluator::evaluate(const std::vector<const Genome*>& genomes,
                                                   const EvalJobSpec& job) {
  if (genomes.empty()) return {};
  std::unique_lock<std::mutex> lock(mutex_);
  wanted_.clear();
  results_.clear();
  dispatched_.clear();
  for (const Genome* g : genomes) {
    genomes_[g->genome_id] = *g;
    EvalRequest req;
    req.genome_id = g->genome_id;
    req.delta = serialize_delta(*g);
    req.stage = static_cast<std::uint16_t>(job.stage);
    req.step_cap = job.step_cap;
    req.env_seeds = job.env_seeds;
    const JobKey key{req.genome_id, static_cast<int>(req.stage)};
    wanted_.emplace(key, req);
    queue_.push_back(std::move(req));
  }
  job_cv_.notify_all();

  while (results_.size() < wanted_.size()) {
    if (shutting_down_.load()) throw std::runtime_error("master shut down mid-evaluation");
    result_cv_.wait_for(lock, std::chrono::milliseconds(50));
    const auto now = std::chrono::steady_clock::now();
    for (const auto& [key, req] : wanted_) {
      if (results_.count(key)) continue;
      const auto it = dispatched_.find(key);
      if (it != dispatched_.end() &&
          std::chrono::duration<double>(now - it->second).count() > cfg_.straggler_timeout_s) {
        queue_.push_back(req);
        it->second = now;  // rearm instead of storming
        job_cv_.notify_one();
      }
    }
  }

  std::vector<EvalOutcome> out;
  out.reserve(genomes.size());
  for (const Genome* g : genomes)
    out.push_back(results_.at(JobKey{g->genome_id, job.stage}));
  wanted_.clear();
  results_.clear();
  return out;
}

void MasterEvaluator::notify_survivors(std::span<const std::uint64_t> survivor_ids) {
  Frame frame;
  frame.type = FrameType::survivors;
  frame.payload = encode_survivors(survivor_ids);
  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    sessions = sessions_;
  }
  for (const auto& s : sessions)
    if (s->ready) send_frame_to(*s, frame);
}

std::uint64_t MasterEvaluator::take_bytes_transmitted() {
  return bytes_since_take_.exchange(0) ;
}

int MasterEvaluator::worker_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return ready_workers_;
}

bool MasterEvaluator::wait_for_workers(int n, double timeout_s) {
  std::unique_lock<std::mutex> lock(mutex_);
  return worker_cv_.wait_for(lock, std::chrono::duration<double>(timeout_s),
                             [&] { return ready_workers_ >= n; });
}

void MasterEvaluator::shutdown() {
  bool expected = false;
  if (!shutting_down_.compare_exchange_strong(expected, true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }

  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    sessions = sessions_;
    job_cv_.notify_all();
    result_cv_.notify_all();
  }

  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();

  for (const auto& s : sessions) {
    {
      std::lock_guard<std::mutex> lock(s->write_mutex);
      if (!s->closed) {
        ::shutdown(s->fd, SHUT_RDWR);
      }
    }
    if (s->thread.joinable()) s->thread.join();
  }
  std::lock_guard<std::mutex> lock(mutex_);
  sessions_.clear();
}

namespace {

int connect_with_retry(const WorkerConfig& cfg) {
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(cfg.connect_timeout_s);
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return -1;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(cfg.port);
    if (::inet_pton(AF_INET, cfg.host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      return -1;
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      set_nodelay(fd);
      return fd;
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() > deadline) return -1;
    ::usleep(100 * 1000);
  }
}

}  // namespace

WorkerExit worker_session(int fd, int max_jobs) {
  try {
    Frame hello;
    hello.type = FrameType::hello;
    put_u32(hello.payload, kProtocolVersion);
    write_frame(fd, hello);

    Frame frame;
    if (!read_frame(fd, frame) || frame.type != FrameType::arch)
      return WorkerExit::protocol_error;
    const TaskBundle bundle = task_bundle_from_json(
        std::string(frame.payload.begin(), frame.payload.end()));
    const ArchitectureSpec& arch = bundle.arch;
    const std::shared_ptr<FitnessEnv> env = make_env(bundle);
    ParentCache cache;
    int jobs_done = 0;

    while (read_frame(fd, frame)) {
      if (frame.type == FrameType::shutdown) return WorkerExit::clean_shutdown;
      if (frame.type == FrameType::survivors) {
        const std::vector<std::uint64_t> ids = decode_survivors(frame.payload);
        cache.retain_only(ids);
        continue;
      }
      if (frame.type != FrameType::eval_request) return WorkerExit::protocol_error;

      const EvalRequest req = decode_eval_request(frame.payload);
      std::shared_ptr<const GenotypeState> state = cache.find(req.genome_id);
      if (!state) {
        if (req.delta.is_root()) {
          auto owned = std::make_shared<GenotypeState>(init_state(arch, Seed{req.delta.seed}));
          state = std::move(owned);
        } else if (auto parent = cache.find(req.delta.parent_id)) {
          auto child = std::make_shared<GenotypeState>(*parent);
          apply_mutation(*child, arch, MutationRecord{Seed{req.delta.seed}, req.delta.sigma},
                         req.delta.record_index());
          state = std::move(child);
        } else {
          Frame ask;
          ask.type = FrameType::lineage_request;
          put_u64(ask.payload, req.genome_id);
          write_frame(fd, ask);
          Frame reply;
          while (true) {
            if (!read_frame(fd, reply)) return WorkerExit::connection_lost;
            if (reply.type == FrameType::survivors) {
              cache.retain_only(decode_survivors(reply.payload));
              continue;
            }
            if (reply.type == FrameType::shutdown) return WorkerExit::clean_shutdown;
            if (reply.type != FrameType::lineage) return WorkerExit::protocol_error;
            break;
          }
          const Genome genome =
              genome_from_json(std::string(reply.payload.begin(), reply.payload.end()));
          state = std::make_shared<GenotypeState>(develop_state(genome, arch));
        }
        cache.put(req.genome_id, state);
      }

      const Phenotype phenotype = develop_products(*state, arch);
      EvalJobSpec job;
      job.stage = req.stage;
      job.env_seeds = req.env_seeds;
      job.step_cap = req.step_cap;
      const PolicyEvalResult r = env->evaluate(arch, phenotype, job);

      Frame result;
      result.type = FrameType::eval_result;
      result.payload =
          encode_eval_result(EvalOutcome{req.genome_id, req.stage, r.fitness, r.env_steps});
      write_frame(fd, result);

      if (max_jobs > 0 && ++jobs_done >= max_jobs) return WorkerExit::job_limit;
    }
    return WorkerExit::connection_lost;
  } catch (const std::exception&) {
    return WorkerExit::protocol_error;
  }
}

WorkerExit run_worker(const WorkerConfig& cfg) {
  const int fd = connect_with_retry(cfg);
  if (fd < 0) return WorkerExit::connection_lost;
  const WorkerExit rc = worker_session(fd, cfg.max_jobs);
  ::close(fd);
  return rc;
}

BandwidthReport account_bandwidth(const std::vector<RunLogRow>& rows,
                                  std::uint64_t phenotype_params) {
  BandwidthReport report;
  std::map<int, GenerationBandwidth> by_gen;
  for (const RunLogRow& row : rows) {
    GenerationBandwidth& g = by_gen[row.generation];
    g.generation = row.generation;
    g.bytes += row.bytes_transmitted;
    g.evaluations += static_cast<std::uint64_t>(row.candidate_count);
    report.total_bytes += row.bytes_transmitted;
    report.total_evaluations += static_cast<std::uint64_t>(row.candidate_count);
  }
  report.per_generation.reserve(by_gen.size());
  for (const auto& [gen, g] : by_gen) report.per_generation.push_back(g);
  report.bytes_per_evaluation =
      report.total_evaluations == 0
          ? 0.0
          : static_cast<double>(report.total_bytes) / static_cast<double>(report.total_evaluations);
  report.hypothetical_bytes_per_genome = phenotype_params * 4;
  report.hypothetical_total_bytes = static_cast<double>(report.hypothetical_bytes_per_genome) *
                                    static_cast<double>(report.total_evaluations);
  return report;
}

}  // namespace lrne
