#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lrne/layers.hpp"
#include "lrne/rng.hpp"
#include "lrne/tensor.hpp"
#include "lrne/tokenizer.hpp"

namespace lrne {

struct TileTrackConfig {
  int grid_w = 24;
  int grid_h = 24;
  int window = 9;       // odd; observation is window x window, agent-centered
  int frame_stack = 4;  // frames in the observation history
  int min_tiles = 40;
  int max_tiles = 80;
  int no_progress_limit = 20;
  std::uint32_t step_cap = 1000;
  double done_fraction = 0.95;
};

struct TrackTile {
  int x = 0;
  int y = 0;
};

/// Deterministically generates a closed, self-avoiding loop of adjacent
/// tiles from the seed: a biased random walk that turns back toward its
/// start once long enough, with a fixed rectangular course as fallback for
/// seeds whose walks fail to close. Tile count is within
/// [min_tiles, max_tiles].
std::vector<TrackTile> generate_track(Seed seed, const TileTrackConfig& cfg = {});

enum class TrackAction : int { forward = 0, turn_left = 1, turn_right = 2, noop = 3 };

/// Top-down driving-on-tiles episode. Score is the number of distinct
/// track tiles visited, +1 reward per new tile. Episodes end at 95% tiles
/// visited, after no_progress_limit consecutive steps without a new tile,
/// or at the step cap. Deterministic given (seed, action sequence).
class TileTrack {
 public:
  explicit TileTrack(Seed env_seed, TileTrackConfig cfg = {});

  struct StepResult {
    float reward = 0.0f;
    bool done = false;
  };

  /// Advances one step; stepping a finished episode is a hard error.
  StepResult step(TrackAction action);

  /// Stacked observation: frame_stack frames, oldest first, each frame 3
  /// binary channels (track, visited, agent) in the window centered on the
  /// agent's current position. Shape (frame_stack*3, window, window).
  Volume observation() const;

  bool done() const { return done_; }
  int score() const { return score_; }
  int tile_count() const { return static_cast<int>(track_.size()); }
  std::uint32_t total_steps() const { return total_steps_; }
  int steps_since_new_tile() const { return steps_since_new_tile_; }
  const std::vector<TrackTile>& track() const { return track_; }

 private:
  struct Frame {
    std::vector<std::uint8_t> visited;
    int agent_x = 0;
    int agent_y = 0;
  };

  bool on_track(int x, int y) const;
  int tile_index(int x, int y) const;
  void push_frame();

  TileTrackConfig cfg_;
  std::vector<TrackTile> track_;
  std::vector<int> tile_at_;  // grid_w*grid_h -> tile index or -1
  std::vector<std::uint8_t> visited_;
  std::vector<Frame> history_;
  int agent_x_ = 0;
  int agent_y_ = 0;
  int heading_ = 0;  // 0 +x, 1 +y, 2 -x, 3 -y
  int score_ = 0;
  int needed_ = 0;
  int steps_since_new_tile_ = 0;
  std::uint32_t total_steps_ = 0;
  bool done_ = false;
};

/// One evaluation job: which environment episodes to run (or, for the
/// language-model task, just the deterministic pass).
struct EvalJobSpec {
  int stage = 0;
  std::vector<std::uint64_t> env_seeds;
  std::uint32_t step_cap = 1000;
};

struct PolicyEvalResult {
  double fitness = 0.0;
  std::uint64_t env_steps = 0;
};

/// A fitness environment shared by the local and distributed evaluators.
class FitnessEnv {
 public:
  virtual ~FitnessEnv() = default;
  virtual PolicyEvalResult evaluate(const ArchitectureSpec& arch, const Phenotype& p,
                                    const EvalJobSpec& job) = 0;
  virtual std::string kind() const = 0;
};

/// Runs the policy net with argmax action selection over TileTrack
/// episodes; fitness is the mean episode score.
class TileTrackEnv : public FitnessEnv {
 public:
  explicit TileTrackEnv(TileTrackConfig cfg = {}) : cfg_(cfg) {}
  PolicyEvalResult evaluate(const ArchitectureSpec& arch, const Phenotype& p,
                            const EvalJobSpec& job) override;
  std::string kind() const override { return "tiletrack"; }
  const TileTrackConfig& config() const { return cfg_; }

 private:
  TileTrackConfig cfg_;
};

/// Runs one TileTrack episode and returns the score plus the trajectory
/// (step, action, reward) rows; used by replay.
struct EpisodeTrace {
  double score = 0.0;
  std::uint64_t steps = 0;
  std::vector<std::pair<int, float>> actions;  // (action, reward) per step
};
EpisodeTrace run_episode(const ArchitectureSpec& arch, const Phenotype& p, Seed env_seed,
                         const TileTrackConfig& cfg, std::uint32_t step_cap);

struct LmTaskConfig {
  int vocab_size = 512;
  int max_seq_len = 256;
  int n_sequences = 32;
};

/// Language-modeling fitness on a fixed corpus. Documents are separated by
/// the end-of-text marker. Vocabulary handling: <= 256 uses raw bytes with
/// no separator token; larger sizes train byte-pair merges on the corpus.
/// Fitness is deterministic, so env seeds are ignored; env_steps counts
/// scored next-token positions.
class LmEnv : public FitnessEnv {
 public:
  LmEnv(const std::string& corpus_text, const LmTaskConfig& cfg);
  /// Worker-side constructor from a shipped tokenizer model.
  LmEnv(const std::string& corpus_text, const LmTaskConfig& cfg, const BpeModel& model);

  PolicyEvalResult evaluate(const ArchitectureSpec& arch, const Phenotype& p,
                            const EvalJobSpec& job) override;
  std::string kind() const override { return "lm"; }

  const std::vector<std::vector<int>>& sequences() const { return sequences_; }
  const BpeModel* bpe() const { return bpe_ ? &*bpe_ : nullptr; }
  int vocab_size() const { return cfg_.vocab_size; }
  std::uint64_t positions() const { return positions_; }

 private:
  void build_sequences(const std::string& corpus_text);

  LmTaskConfig cfg_;
  std::optional<BpeModel> bpe_;
  std::vector<std::vector<int>> sequences_;
  std::uint64_t positions_ = 0;
};

std::string read_text_file(const std::string& path);

}  // namespace lrne
