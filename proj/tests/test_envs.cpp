#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "lrne/envs.hpp"
#include "lrne/genome.hpp"
#include "lrne/layers.hpp"

using namespace lrne;

namespace {

ArchitectureSpec policy_arch() {
  ArchitectureSpec arch;
  arch.name = "tiny_policy";
  LayerSpec c;
  c.kind = LayerKind::conv;
  c.in_ch = 12;
  c.out_ch = 8;
  c.kh = 3;
  c.kw = 3;
  c.stride = 2;
  LayerSpec d;
  d.kind = LayerKind::dense;
  d.in = 128;
  d.out = 4;
  arch.layers = {c, d};
  return arch;
}

int dir_of(const TrackTile& from, const TrackTile& to) {
  if (to.x == from.x + 1) return 0;
  if (to.y == from.y + 1) return 1;
  if (to.x == from.x - 1) return 2;
  return 3;
}

}  // namespace

TEST_CASE("generated tracks are valid closed loops across many seeds") {
  const TileTrackConfig cfg;
  int fallbacks = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const std::vector<TrackTile> track = generate_track(Seed{s}, cfg);
    const int n = static_cast<int>(track.size());
    REQUIRE(n >= cfg.min_tiles);
    REQUIRE(n <= cfg.max_tiles);
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < n; ++i) {
      CHECK(track[i].x >= 0);
      CHECK(track[i].x < cfg.grid_w);
      CHECK(track[i].y >= 0);
      CHECK(track[i].y < cfg.grid_h);
      CHECK(seen.insert({track[i].x, track[i].y}).second);
      const TrackTile& next = track[(i + 1) % n];
      const int dist =
          std::abs(track[i].x - next.x) + std::abs(track[i].y - next.y);
      CHECK(dist == 1);
    }
    if (n == 76) ++fallbacks;
  }
  // generation should mostly succeed rather than lean on the fallback
  CHECK(fallbacks < 150);

  const std::vector<TrackTile> a = generate_track(Seed{7}, cfg);
  const std::vector<TrackTile> b = generate_track(Seed{7}, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
  }
}

TEST_CASE("episode starts clean") {
  TileTrack env(Seed{3});
  CHECK(env.score() == 0);
  CHECK(env.total_steps() == 0);
  CHECK(!env.done());
  CHECK(env.steps_since_new_tile() == 0);
  CHECK(env.tile_count() >= 40);
}

TEST_CASE("a scripted perfect driver finishes at 95% of tiles") {
  for (std::uint64_t s : {1ull, 5ull, 11ull}) {
    TileTrack env(Seed{s});
    const std::vector<TrackTile>& track = env.track();
    const int n = env.tile_count();
    int heading = dir_of(track[0], track[1]);
    int at = 0;
    double reward_sum = 0.0;
    int guard = 0;
    while (!env.done() && guard++ < 10000) {
      const int want = dir_of(track[static_cast<std::size_t>(at)],
                              track[static_cast<std::size_t>((at + 1) % n)]);
      TrackAction action;
      if (want == heading) {
        action = TrackAction::forward;
      } else if (want == (heading + 1) % 4) {
        action = TrackAction::turn_right;
        heading = want;
      } else {
        action = TrackAction::turn_left;
        heading = (heading + 3) % 4;
      }
      const auto r = env.step(action);
      reward_sum += r.reward;
      if (action == TrackAction::forward) at = (at + 1) % n;
    }
    CHECK(env.done());
    const int needed = static_cast<int>(std::ceil(0.95 * n));
    CHECK(env.score() == needed);
    CHECK(reward_sum == doctest::Approx(env.score()));
    CHECK(env.steps_since_new_tile() < 20);
  }
}

TEST_CASE("twenty steps without progress end the episode exactly then") {
  TileTrack env(Seed{9});
  for (int i = 1; i <= 19; ++i) {
    const auto r = env.step(TrackAction::noop);
    CHECK(!r.done);
  }
  CHECK(env.steps_since_new_tile() == 19);
  const auto r = env.step(TrackAction::noop);
  CHECK(r.done);
  CHECK(env.done());
  CHECK(env.steps_since_new_tile() == 20);
  CHECK(env.total_steps() == 20);
  CHECK_THROWS(env.step(TrackAction::noop));
}

TEST_CASE("forward into off-track cells does not move the agent") {
  TileTrack env(Seed{15});
  const std::vector<TrackTile>& track = env.track();
  // find a direction from the start that leaves the track
  std::set<std::pair<int, int>> cells;
  for (const TrackTile& t : track) cells.insert({t.x, t.y});
  const int start_heading = dir_of(track[0], track[1]);
  const int dx[4] = {1, 0, -1, 0};
  const int dy[4] = {0, 1, 0, -1};
  int off_dir = -1;
  for (int d = 0; d < 4; ++d)
    if (!cells.count({track[0].x + dx[d], track[0].y + dy[d]})) off_dir = d;
  REQUIRE(off_dir >= 0);

  int heading = start_heading;
  while (heading != off_dir) {
    env.step(TrackAction::turn_right);
    heading = (heading + 1) % 4;
  }
  for (int i = 0; i < 3; ++i) {
    const auto r = env.step(TrackAction::forward);
    CHECK(r.reward == 0.0f);
  }
  CHECK(env.score() == 0);

  // the agent must still be on the start tile: steering back toward the
  // second tile still works
  while (heading != start_heading) {
    env.step(TrackAction::turn_right);
    heading = (heading + 1) % 4;
  }
  const auto r = env.step(TrackAction::forward);
  CHECK(r.reward == 1.0f);
  CHECK(env.score() == 1);
}

TEST_CASE("observation is stacked binary frames, oldest first") {
  TileTrack env(Seed{21});
  const Volume initial = env.observation();
  REQUIRE(initial.ch == 12);
  REQUIRE(initial.h == 9);
  REQUIRE(initial.w == 9);
  for (float v : initial.data) CHECK((v == 0.0f || v == 1.0f));
  // all frames identical at reset, agent centered
  for (int f = 0; f < 4; ++f) {
    CHECK(initial.at(f * 3 + 2, 4, 4) == 1.0f);  // agent channel, center
    CHECK(initial.at(f * 3 + 0, 4, 4) == 1.0f);  // track channel under agent
    for (std::size_t i = 0; i < static_cast<std::size_t>(81); ++i)
      CHECK(initial.data[static_cast<std::size_t>(f * 3) * 81 + i] == initial.data[i]);
  }
  // nothing visited yet
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) CHECK(initial.at(1, r, c) == 0.0f);

  env.step(TrackAction::forward);
  const Volume after = env.observation();
  // newest frame sees the agent at the center; oldest frame saw it one cell
  // behind, so their agent channels differ
  CHECK(after.at(3 * 3 + 2, 4, 4) == 1.0f);
  bool differs = false;
  for (int r = 0; r < 9 && !differs; ++r)
    for (int c = 0; c < 9 && !differs; ++c)
      if (after.at(0 * 3 + 2, r, c) != after.at(3 * 3 + 2, r, c)) differs = true;
  CHECK(differs);
  // the tile just visited shows up in the newest visited channel
  bool any_visited = false;
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c)
      if (after.at(3 * 3 + 1, r, c) == 1.0f) any_visited = true;
  CHECK(any_visited);
}

TEST_CASE("step cap terminates long episodes") {
  TileTrackConfig cfg;
  cfg.step_cap = 5;
  TileTrack env(Seed{2}, cfg);
  for (int i = 0; i < 4; ++i) CHECK(!env.step(TrackAction::turn_left).done);
  CHECK(env.step(TrackAction::turn_left).done);
  CHECK(env.total_steps() == 5);
}

TEST_CASE("random policies terminate within the no-progress bound") {
  const ArchitectureSpec arch = policy_arch();
  TileTrackConfig cfg;
  cfg.step_cap = 5000;  // make the no-progress rule the binding constraint
  for (std::uint64_t s = 0; s < 30; ++s) {
    Genome g;
    g.init_seed = Seed{1000 + s};
    const Phenotype p = develop(g, arch);
    const EpisodeTrace trace = run_episode(arch, p, Seed{s}, cfg, cfg.step_cap);
    TileTrack probe(Seed{s}, cfg);
    const std::uint64_t bound =
        20ull * static_cast<std::uint64_t>(probe.tile_count()) + 20ull;
    CHECK(trace.steps <= bound);
  }
}

TEST_CASE("replayed episodes are deterministic") {
  const ArchitectureSpec arch = policy_arch();
  Genome g;
  g.init_seed = Seed{77};
  const Phenotype p = develop(mutate(g, Seed{78}, 0.02f, 2), arch);
  const EpisodeTrace a = run_episode(arch, p, Seed{5}, {}, 1000);
  const EpisodeTrace b = run_episode(arch, p, Seed{5}, {}, 1000);
  CHECK(a.score == b.score);
  CHECK(a.steps == b.steps);
  REQUIRE(a.actions.size() == b.actions.size());
  for (std::size_t i = 0; i < a.actions.size(); ++i) {
    CHECK(a.actions[i].first == b.actions[i].first);
    CHECK(a.actions[i].second == b.actions[i].second);
  }
}

TEST_CASE("tiletrack evaluation averages scores and sums env steps") {
  const ArchitectureSpec arch = policy_arch();
  Genome g;
  g.init_seed = Seed{123};
  const Phenotype p = develop(g, arch);
  TileTrackEnv env;
  EvalJobSpec job;
  job.env_seeds = {10, 11, 12};
  job.step_cap = 400;
  const PolicyEvalResult r = env.evaluate(arch, p, job);

  double total = 0.0;
  std::uint64_t steps = 0;
  for (std::uint64_t s : job.env_seeds) {
    const EpisodeTrace t = run_episode(arch, p, Seed{s}, env.config(), job.step_cap);
    total += t.score;
    steps += t.steps;
  }
  CHECK(r.fitness == doctest::Approx(total / 3.0));
  CHECK(r.env_steps == steps);
}

TEST_CASE("policy output width is validated") {
  ArchitectureSpec arch = policy_arch();
  arch.layers[1].out = 5;
  Genome g;
  g.init_seed = Seed{4};
  const Phenotype p = develop(g, arch);
  CHECK_THROWS(run_episode(arch, p, Seed{1}, {}, 100));
}

TEST_CASE("lm env in byte mode uses raw bytes and no separator token") {
  const std::string corpus =
      "the cat sat.<|endoftext|>a dog ran far away.<|endoftext|>birds fly.";
  LmTaskConfig cfg;
  cfg.vocab_size = 256;
  cfg.max_seq_len = 64;
  cfg.n_sequences = 10;
  LmEnv env(corpus, cfg);
  CHECK(env.bpe() == nullptr);
  REQUIRE(env.sequences().size() == 3);
  CHECK(env.sequences()[0].size() == 12);
  for (const auto& seq : env.sequences())
    for (int t : seq) {
      CHECK(t >= 0);
      CHECK(t < 256);
    }
  CHECK(env.positions() == (12 - 1) + (19 - 1) + (10 - 1));
}

TEST_CASE("lm env fitness on a zero phenotype is -ln(vocab)") {
  TransformerConfig tcfg;
  tcfg.vocab_size = 256;
  tcfg.n_blocks = 1;
  tcfg.hidden_dim = 8;
  tcfg.ff_dim = 8;
  tcfg.n_heads = 2;
  tcfg.head_dim = 2;
  const ArchitectureSpec arch = make_transformer_arch(tcfg, Representation::direct, "lm");
  Phenotype p;
  p.layers.resize(arch.layers.size());
  for (std::size_t li = 0; li < arch.layers.size(); ++li)
    for (const TensorShape& s : arch.layer_tensor_shapes(li)) {
      DevelopedTensor t;
      if (s.m > 0) t.weight = Matrix(s.m, s.n);
      t.bias.assign(static_cast<std::size_t>(s.bias_len), 0.0f);
      p.layers[li].push_back(std::move(t));
    }

  LmTaskConfig cfg;
  cfg.vocab_size = 256;
  LmEnv env("hello world<|endoftext|>good night moon", cfg);
  const PolicyEvalResult r = env.evaluate(arch, p, {});
  CHECK(r.fitness == doctest::Approx(-std::log(256.0)).epsilon(1e-9));
  CHECK(r.env_steps == env.positions());
}

TEST_CASE("lm env trains merges above the byte vocabulary") {
  std::string corpus;
  for (int i = 0; i < 50; ++i)
    corpus += "the quick brown fox jumps over the lazy dog.<|endoftext|>";
  LmTaskConfig cfg;
  cfg.vocab_size = 280;
  cfg.n_sequences = 5;
  LmEnv env(corpus, cfg);
  REQUIRE(env.bpe() != nullptr);
  CHECK(env.bpe()->vocab_size() == 280);
  REQUIRE(env.sequences().size() == 5);
  for (const auto& seq : env.sequences()) {
    CHECK(seq.back() == kEndOfTextId);
    for (int t : seq) CHECK(t < 280);
  }
  // a worker construction from the shipped model reproduces the sequences
  LmEnv worker(corpus, cfg, *env.bpe());
  REQUIRE(worker.sequences().size() == env.sequences().size());
  CHECK(worker.sequences() == env.sequences());
}

TEST_CASE("lm env respects n_sequences and max_seq_len") {
  std::string corpus;
  for (int i = 0; i < 10; ++i) corpus += "abcdefghijklmnopqrstuvwxyz<|endoftext|>";
  LmTaskConfig cfg;
  cfg.vocab_size = 256;
  cfg.max_seq_len = 10;
  cfg.n_sequences = 4;
  LmEnv env(corpus, cfg);
  REQUIRE(env.sequences().size() == 4);
  for (const auto& seq : env.sequences()) CHECK(seq.size() == 10);
  CHECK(env.positions() == 4 * 9);
}

TEST_CASE("lm env rejects unusable corpora") {
  LmTaskConfig cfg;
  cfg.vocab_size = 256;
  CHECK_THROWS(LmEnv("", cfg));
  CHECK_THROWS(LmEnv("x<|endoftext|>y", cfg));  // every story shorter than 2
  LmTaskConfig bad = cfg;
  bad.max_seq_len = 1;
  CHECK_THROWS(LmEnv("hello world", bad));
}
