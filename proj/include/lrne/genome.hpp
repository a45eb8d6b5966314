#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrne/layers.hpp"
#include "lrne/rng.hpp"

namespace lrne {

/// One inherited mutation step: noise drawn from substreams rooted at
/// `seed`, scaled by `sigma`.
struct MutationRecord {
  Seed seed{0};
  float sigma = 0.0f;
};

/// A genome is a seed chain: the init seed plus the ordered mutation
/// records. Weights are reconstructed, never stored.
struct Genome {
  std::uint64_t genome_id = 0;
  std::uint64_t parent_id = 0;  // 0 marks a generation-0 root
  Seed init_seed{0};
  std::vector<MutationRecord> lineage;
  std::string arch_ref;
};

/// Constant-size transmissible description of a genome relative to its
/// parent. Layout (24 bytes, little-endian): parent_id u64 | seed u64 |
/// sigma f32 | flags u32. flags bit 0 marks a generation-0 root (seed is
/// then the init seed and sigma is 0); bits 1..31 carry the index of the
/// transmitted mutation record within the child's lineage, which keys the
/// mutation noise substreams.
struct GenomeDelta {
  std::uint64_t parent_id = 0;
  std::uint64_t seed = 0;
  float sigma = 0.0f;
  std::uint32_t flags = 0;

  bool is_root() const { return (flags & 1u) != 0; }
  std::uint32_t record_index() const { return flags >> 1; }
};

inline constexpr std::size_t kDeltaBytes = 24;

GenomeDelta serialize_delta(const Genome& child);
std::array<std::uint8_t, kDeltaBytes> delta_to_bytes(const GenomeDelta& d);
GenomeDelta delta_from_bytes(std::span<const std::uint8_t> bytes);

/// Draws the generation-0 genotype. Per-tensor substreams are keyed
/// (init, 0, layer, tensor) and rooted at the init seed.
GenotypeState init_state(const ArchitectureSpec& arch, Seed init_seed);

/// Applies one mutation record in place. Per-tensor substreams are keyed
/// (mutate, record_index, layer, tensor) and rooted at the record seed, so
/// application order within a record is irrelevant to the result.
void apply_mutation(GenotypeState& state, const ArchitectureSpec& arch,
                    const MutationRecord& record, std::uint32_t record_index);

/// Replays the full chain from the init seed.
GenotypeState develop_state(const Genome& genome, const ArchitectureSpec& arch);

/// Materializes factor products (and conv reshapes) from a genotype.
Phenotype develop_products(const GenotypeState& state, const ArchitectureSpec& arch);

Phenotype develop(const Genome& genome, const ArchitectureSpec& arch);

/// Order-insensitive digest of a developed phenotype's exact bits.
std::uint64_t phenotype_hash(const Phenotype& p);

Genome mutate(const Genome& parent, Seed seed, float sigma, std::uint64_t child_id);

/// Thread-safe store of developed genotype states keyed by genome id.
/// Incremental development clones a parent state and applies one record,
/// which is bit-identical to replaying from scratch.
class ParentCache {
 public:
  std::shared_ptr<const GenotypeState> find(std::uint64_t genome_id) const;
  void put(std::uint64_t genome_id, std::shared_ptr<const GenotypeState> state);
  void retain_only(std::span<const std::uint64_t> genome_ids);
  void clear();
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, std::shared_ptr<const GenotypeState>> states_;
};

/// Develops `child` from its cached parent if present; std::nullopt on a
/// cache miss (caller falls back to full replay or lineage recovery).
std::optional<GenotypeState> develop_state_incremental(const Genome& child,
                                                       const ArchitectureSpec& arch,
                                                       const ParentCache& cache);

// JSON (de)serialization for persistence; schema in docs/config_schema.md.
std::string genome_to_json(const Genome& g);
Genome genome_from_json(const std::string& json_text);

}  // namespace lrne
