#include "lrne/genome.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lrne {

namespace {

void put_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

GenomeDelta serialize_delta(const Genome& child) {
  GenomeDelta d;
  if (child.lineage.empty()) {
    d.parent_id = 0;
    d.seed = child.init_seed.value;
    d.sigma = 0.0f;
    d.flags = 1u;
  } else {
    const MutationRecord& last = child.lineage.back();
    d.parent_id = child.parent_id;
    d.seed = last.seed.value;
    d.sigma = last.sigma;
    d.flags = static_cast<std::uint32_t>(child.lineage.size() - 1) << 1;
  }
  return d;
}

std::array<std::uint8_t, kDeltaBytes> delta_to_bytes(const GenomeDelta& d) {
  std::array<std::uint8_t, kDeltaBytes> out{};
  put_u64(out.data(), d.parent_id);
  put_u64(out.data() + 8, d.seed);
  std::uint32_t sigma_bits;
  static_assert(sizeof(sigma_bits) == sizeof(d.sigma));
  std::memcpy(&sigma_bits, &d.sigma, sizeof(sigma_bits));
  put_u32(out.data() + 16, sigma_bits);
  put_u32(out.data() + 20, d.flags);
  return out;
}

GenomeDelta delta_from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kDeltaBytes)
    throw std::invalid_argument("genome delta must be exactly 24 bytes");
  GenomeDelta d;
  d.parent_id = get_u64(bytes.data());
  d.seed = get_u64(bytes.data() + 8);
  const std::uint32_t sigma_bits = get_u32(bytes.data() + 16);
  std::memcpy(&d.sigma, &sigma_bits, sizeof(d.sigma));
  d.flags = get_u32(bytes.data() + 20);
  return d;
}

GenotypeState init_state(const ArchitectureSpec& arch, Seed init_seed) {
  GenotypeState state;
  state.layers.resize(arch.layers.size());
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const auto shapes = arch.layer_tensor_shapes(li);
    auto& layer = state.layers[li];
    layer.tensors.reserve(shapes.size());
    for (std::size_t ti = 0; ti < shapes.size(); ++ti) {
      NoiseStream stream = derive_substream(
          init_seed,
          {kLabelInit, 0, static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(ti)});
      layer.tensors.push_back(init_tensor(shapes[ti], stream));
    }
  }
  return state;
}

void apply_mutation(GenotypeState& state, const ArchitectureSpec& arch,
                    const MutationRecord& record, std::uint32_t record_index) {
  if (state.layers.size() != arch.layers.size())
    throw std::invalid_argument("genotype does not match architecture");
  for (std::size_t li = 0; li < state.layers.size(); ++li) {
    auto& layer = state.layers[li];
    for (std::size_t ti = 0; ti < layer.tensors.size(); ++ti) {
      NoiseStream stream = derive_substream(
          record.seed, {kLabelMutate, record_index, static_cast<std::uint64_t>(li),
                        static_cast<std::uint64_t>(ti)});
      mutate_tensor(layer.tensors[ti], stream, record.sigma, arch.factor_noise);
    }
  }
}

GenotypeState develop_state(const Genome& genome, const ArchitectureSpec& arch) {
  GenotypeState state = init_state(arch, genome.init_seed);
  for (std::size_t r = 0; r < genome.lineage.size(); ++r)
    apply_mutation(state, arch, genome.lineage[r], static_cast<std::uint32_t>(r));
  return state;
}

Phenotype develop_products(const GenotypeState& state, const ArchitectureSpec& arch) {
  if (state.layers.size() != arch.layers.size())
    throw std::invalid_argument("genotype does not match architecture");
  Phenotype p;
  p.layers.resize(state.layers.size());
  for (std::size_t li = 0; li < state.layers.size(); ++li) {
    const LayerSpec& spec = arch.layers[li];
    for (const TensorGenotype& g : state.layers[li].tensors) {
      DevelopedTensor t = develop_tensor(g);
      if (spec.kind == LayerKind::conv) {
        t.conv = reshape_to_conv(t.weight, spec.in_ch, spec.out_ch, spec.kh, spec.kw);
        t.is_conv = true;
      }
      p.layers[li].push_back(std::move(t));
    }
  }
  return p;
}

Phenotype develop(const Genome& genome, const ArchitectureSpec& arch) {
  return develop_products(develop_state(genome, arch), arch);
}

std::uint64_t phenotype_hash(const Phenotype& p) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& layer : p.layers) {
    for (const DevelopedTensor& t : layer) {
      mix(bits_hash(t.weight.data));
      mix(bits_hash(t.bias));
    }
  }
  return h;
}

Genome mutate(const Genome& parent, Seed seed, float sigma, std::uint64_t child_id) {
  if (sigma < 0.0f) throw std::invalid_argument("sigma must be non-negative");
  Genome child = parent;
  child.genome_id = child_id;
  child.parent_id = parent.genome_id;
  child.lineage.push_back(MutationRecord{seed, sigma});
  return child;
}

std::shared_ptr<const GenotypeState> ParentCache::find(std::uint64_t genome_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = states_.find(genome_id);
  return it == states_.end() ? nullptr : it->second;
}

void ParentCache::put(std::uint64_t genome_id, std::shared_ptr<const GenotypeState> state) {
  std::lock_guard<std::mutex> lock(mutex_);
  states_[genome_id] = std::move(state);
}

void ParentCache::retain_only(std::span<const std::uint64_t> genome_ids) {
  std::lock_guard<std::mutex> lock(mutex_);
  std::unordered_map<std::uint64_t, std::shared_ptr<const GenotypeState>> kept;
  for (std::uint64_t id : genome_ids) {
    auto it = states_.find(id);
    if (it != states_.end()) kept.emplace(it->first, it->second);
  }
  states_ = std::move(kept);
}

void ParentCache::clear() {
  std::lock_guard<std::mutex> lock(mutex_);
  states_.clear();
}

std::size_t ParentCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return states_.size();
}

std::optional<GenotypeState> develop_state_incremental(const Genome& child,
                                                       const ArchitectureSpec& arch,
                                                       const ParentCache& cache) {
  if (child.lineage.empty()) return init_state(arch, child.init_seed);
  auto parent = cache.find(child.parent_id);
  if (!parent) return std::nullopt;
  GenotypeState state = *parent;
  apply_mutation(state, arch, child.lineage.back(),
                 static_cast<std::uint32_t>(child.lineage.size() - 1));
  return state;
}

std::string genome_to_json(const Genome& g) {
  nlohmann::json j;
  j["genome_id"] = g.genome_id;
  j["parent_id"] = g.parent_id;
  j["init_seed"] = g.init_seed.value;
  j["arch_ref"] = g.arch_ref;
  nlohmann::json lineage = nlohmann::json::array();
  for (const MutationRecord& r : g.lineage)
    lineage.push_back({{"seed", r.seed.value}, {"sigma", r.sigma}});
  j["lineage"] = lineage;
  return j.dump();
}

Genome genome_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  Genome g;
  g.genome_id = j.at("genome_id").get<std::uint64_t>();
  g.parent_id = j.at("parent_id").get<std::uint64_t>();
  g.init_seed.value = j.at("init_seed").get<std::uint64_t>();
  g.arch_ref = j.value("arch_ref", "");
  for (const auto& r : j.at("lineage"))
    g.lineage.push_back(
        MutationRecord{Seed{r.at("seed").get<std::uint64_t>()}, r.at("sigma").get<float>()});
  return g;
}

}  // namespace lrne
