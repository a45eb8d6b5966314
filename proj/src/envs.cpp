#include "lrne/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lrne/transformer.hpp"

namespace lrne {

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};
constexpr int kMargin = 2;

bool adjacent(const TrackTile& a, const TrackTile& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y) == 1;
}

std::vector<TrackTile> rectangle_track(const TileTrackConfig& cfg) {
  const int side = std::min({cfg.grid_w - 2 * kMargin, cfg.grid_h - 2 * kMargin,
                             cfg.max_tiles / 4 + 1});
  const int perimeter = 4 * (side - 1);
  if (side < 3 || perimeter < cfg.min_tiles || perimeter > cfg.max_tiles)
    throw std::runtime_error("track config cannot fit a loop in the tile budget");
  const int x0 = kMargin, y0 = kMargin;
  const int x1 = kMargin + side - 1, y1 = kMargin + side - 1;
  std::vector<TrackTile> track;
  track.reserve(static_cast<std::size_t>(perimeter));
  for (int x = x0; x < x1; ++x) track.push_back({x, y0});
  for (int y = y0; y < y1; ++y) track.push_back({x1, y});
  for (int x = x1; x > x0; --x) track.push_back({x, y1});
  for (int y = y1; y > y0; --y) track.push_back({x0, y});
  return track;
}

}  // namespace

std::vector<TrackTile> generate_track(Seed seed, const TileTrackConfig& cfg) {
  NoiseStream stream = derive_substream(seed, {kLabelTrack});
  const int xs = cfg.grid_w - 2 * kMargin;
  const int ys = cfg.grid_h - 2 * kMargin;
  if (xs < 3 || ys < 3) throw std::runtime_error("grid too small for a track");

  for (int attempt = 0; attempt < 64; ++attempt) {
    const TrackTile start{kMargin + static_cast<int>(stream.next_u64() % xs),
                          kMargin + static_cast<int>(stream.next_u64() % ys)};
    std::vector<TrackTile> path{start};
    std::vector<std::uint8_t> used(
        static_cast<std::size_t>(cfg.grid_w) * cfg.grid_h, 0);
    used[static_cast<std::size_t>(start.y) * cfg.grid_w + start.x] = 1;

    while (static_cast<int>(path.size()) < cfg.max_tiles) {
      const TrackTile cur = path.back();
      if (static_cast<int>(path.size()) >= cfg.min_tiles && adjacent(cur, start))
        return path;

      TrackTile candidates[4];
      int n_cand = 0;
      for (int d = 0; d < 4; ++d) {
        const int nx = cur.x + kDx[d];
        const int ny = cur.y + kDy[d];
        if (nx < kMargin || ny < kMargin || nx >= cfg.grid_w - kMargin ||
            ny >= cfg.grid_h - kMargin)
          continue;
        if (used[static_cast<std::size_t>(ny) * cfg.grid_w + nx]) continue;
        candidates[n_cand++] = {nx, ny};
      }
      if (n_cand == 0) break;

      int pick;
      if (static_cast<int>(path.size()) >= cfg.min_tiles && stream.next_unit() < 0.7) {
        pick = 0;
        int best = std::abs(candidates[0].x - start.x) + std::abs(candidates[0].y - start.y);
        for (int c = 1; c < n_cand; ++c) {
          const int dist =
              std::abs(candidates[c].x - start.x) + std::abs(candidates[c].y - start.y);
          if (dist < best) {
            best = dist;
            pick = c;
          }
        }
      } else {
        pick = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n_cand));
      }
      path.push_back(candidates[pick]);
      used[static_cast<std::size_t>(candidates[pick].y) * cfg.grid_w + candidates[pick].x] = 1;
    }
  }
  return rectangle_track(cfg);
}

TileTrack::TileTrack(Seed env_seed, TileTrackConfig cfg)
    : cfg_(cfg), track_(generate_track(env_seed, cfg)) {
  if (cfg_.window % 2 != 1 || cfg_.window < 3)
    throw std::invalid_argument("observation window must be odd and at least 3");
  tile_at_.assign(static_cast<std::size_t>(cfg_.grid_w) * cfg_.grid_h, -1);
  for (std::size_t t = 0; t < track_.size(); ++t)
    tile_at_[static_cast<std::size_t>(track_[t].y) * cfg_.grid_w + track_[t].x] =
        static_cast<int>(t);
  visited_.assign(track_.size(), 0);
  needed_ = static_cast<int>(
      std::ceil(cfg_.done_fraction * static_cast<double>(track_.size())));
  agent_x_ = track_[0].x;
  agent_y_ = track_[0].y;
  for (int d = 0; d < 4; ++d)
    if (track_[0].x + kDx[d] == track_[1].x && track_[0].y + kDy[d] == track_[1].y)
      heading_ = d;
  history_.assign(static_cast<std::size_t>(cfg_.frame_stack),
                  Frame{visited_, agent_x_, agent_y_});
}

bool TileTrack::on_track(int x, int y) const { return tile_index(x, y) >= 0; }

int TileTrack::tile_index(int x, int y) const {
  if (x < 0 || y < 0 || x >= cfg_.grid_w || y >= cfg_.grid_h) return -1;
  return tile_at_[static_cast<std::size_t>(y) * cfg_.grid_w + x];
}

void TileTrack::push_frame() {
  history_.erase(history_.begin());
  history_.push_back(Frame{visited_, agent_x_, agent_y_});
}

TileTrack::StepResult TileTrack::step(TrackAction action) {
  if (done_) throw std::logic_error("step on a finished episode");
  ++total_steps_;
  float reward = 0.0f;
  switch (action) {
    case TrackAction::forward: {
      const int nx = agent_x_ + kDx[heading_];
      const int ny = agent_y_ + kDy[heading_];
      const int tile = tile_index(nx, ny);
      if (tile >= 0) {
        agent_x_ = nx;
        agent_y_ = ny;
        if (!visited_[static_cast<std::size_t>(tile)]) {
          visited_[static_cast<std::size_t>(tile)] = 1;
          ++score_;
          reward = 1.0f;
        }
      }
      break;
    }
    case TrackAction::turn_left:
      heading_ = (heading_ + 3) % 4;
      break;
    case TrackAction::turn_right:
      heading_ = (heading_ + 1) % 4;
      break;
    case TrackAction::noop:
      break;
  }
  if (reward > 0.0f) {
    steps_since_new_tile_ = 0;
  } else {
    ++steps_since_new_tile_;
  }
  push_frame();
  if (score_ >= needed_ || steps_since_new_tile_ >= cfg_.no_progress_limit ||
      total_steps_ >= cfg_.step_cap)
    done_ = true;
  return StepResult{reward, done_};
}

Volume TileTrack::observation() const {
  const int win = cfg_.window;
  const int half = win / 2;
  Volume obs(cfg_.frame_stack * 3, win, win);
  for (int f = 0; f < cfg_.frame_stack; ++f) {
    const Frame& frame = history_[static_cast<std::size_t>(f)];
    for (int r = 0; r < win; ++r) {
      for (int c = 0; c < win; ++c) {
        const int wx = agent_x_ + c - half;
        const int wy = agent_y_ + r - half;
        const int tile = tile_index(wx, wy);
        if (tile >= 0) {
          obs.at(f * 3 + 0, r, c) = 1.0f;
          if (frame.visited[static_cast<std::size_t>(tile)])
            obs.at(f * 3 + 1, r, c) = 1.0f;
        }
        if (wx == frame.agent_x && wy == frame.agent_y) obs.at(f * 3 + 2, r, c) = 1.0f;
      }
    }
  }
  return obs;
}

EpisodeTrace run_episode(const ArchitectureSpec& arch, const Phenotype& p, Seed env_seed,
                         const TileTrackConfig& cfg, std::uint32_t step_cap) {
  TileTrackConfig episode_cfg = cfg;
  if (step_cap > 0) episode_cfg.step_cap = step_cap;
  TileTrack env(env_seed, episode_cfg);
  EpisodeTrace trace;
  while (!env.done()) {
    const std::vector<float> out = feedforward(arch, p, env.observation());
    if (out.size() != 4)
      throw std::invalid_argument("policy must output 4 action values");
    const int action = static_cast<int>(
        std::max_element(out.begin(), out.end()) - out.begin());
    const auto result = env.step(static_cast<TrackAction>(action));
    trace.actions.emplace_back(action, result.reward);
  }
  trace.score = env.score();
  trace.steps = env.total_steps();
  return trace;
}

PolicyEvalResult TileTrackEnv::evaluate(const ArchitectureSpec& arch, const Phenotype& p,
                                        const EvalJobSpec& job) {
  if (job.env_seeds.empty())
    throw std::invalid_argument("tiletrack evaluation needs at least one env seed");
  PolicyEvalResult result;
  double total = 0.0;
  for (std::uint64_t seed : job.env_seeds) {
    const EpisodeTrace trace = run_episode(arch, p, Seed{seed}, cfg_, job.step_cap);
    total += trace.score;
    result.env_steps += trace.steps;
  }
  result.fitness = total / static_cast<double>(job.env_seeds.size());
  return result;
}

LmEnv::LmEnv(const std::string& corpus_text, const LmTaskConfig& cfg) : cfg_(cfg) {
  if (cfg_.vocab_size > kByteVocab) {
    BpeTrainResult trained = train_bpe(corpus_text, cfg_.vocab_size);
    bpe_ = std::move(trained.model);
    if (!trained.reached_target)
      cfg_.vocab_size = bpe_->vocab_size();
  }
  build_sequences(corpus_text);
}

LmEnv::LmEnv(const std::string& corpus_text, const LmTaskConfig& cfg, const BpeModel& model)
    : cfg_(cfg), bpe_(model) {
  if (cfg_.vocab_size <= kByteVocab)
    throw std::invalid_argument("byte-mode lm task does not take a tokenizer model");
  build_sequences(corpus_text);
}

void LmEnv::build_sequences(const std::string& corpus_text) {
  if (cfg_.vocab_size < 2) throw std::invalid_argument("vocab_size must be at least 2");
  if (cfg_.max_seq_len < 2) throw std::invalid_argument("max_seq_len must be at least 2");
  if (cfg_.n_sequences < 1) throw std::invalid_argument("n_sequences must be positive");

  std::vector<std::string> stories;
  std::size_t pos = 0;
  while (pos <= corpus_text.size()) {
    const std::size_t next = corpus_text.find(kEndOfTextText, pos);
    const std::size_t end = next == std::string::npos ? corpus_text.size() : next;
    if (end > pos) stories.push_back(corpus_text.substr(pos, end - pos));
    if (next == std::string::npos) break;
    pos = next + kEndOfTextText.size();
  }

  for (const std::string& story : stories) {
    if (static_cast<int>(sequences_.size()) >= cfg_.n_sequences) break;
    std::vector<int> tokens;
    if (bpe_) {
      tokens = encode(*bpe_, story);
      tokens.push_back(kEndOfTextId);
    } else {
      tokens.reserve(story.size());
      for (char c : story) tokens.push_back(static_cast<unsigned char>(c));
    }
    if (static_cast<int>(tokens.size()) > cfg_.max_seq_len)
      tokens.resize(static_cast<std::size_t>(cfg_.max_seq_len));
    if (tokens.size() < 2) continue;
    for (int t : tokens)
      if (t >= cfg_.vocab_size)
        throw std::runtime_error("corpus token " + std::to_string(t) +
                                 " exceeds the configured vocabulary");
    positions_ += tokens.size() - 1;
    sequences_.push_back(std::move(tokens));
  }
  if (sequences_.empty())
    throw std::runtime_error("corpus produced no usable training sequences");
}

PolicyEvalResult LmEnv::evaluate(const ArchitectureSpec& arch, const Phenotype& p,
                                 const EvalJobSpec&) {
  PolicyEvalResult result;
  result.fitness = lm_fitness(arch, p, sequences_);
  result.env_steps = positions_;
  return result;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace lrne
