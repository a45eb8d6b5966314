#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lrne {

/// Byte-level BPE. Base vocabulary is the 256 byte values plus one special
/// document separator; merges extend it. Token ids: 0..255 bytes, 256 the
/// separator, 257.. merge results in creation order.
inline constexpr int kByteVocab = 256;
inline constexpr int kEndOfTextId = 256;
inline constexpr std::string_view kEndOfTextText = "<|endoftext|>";

struct BpeMerge {
  int left = 0;
  int right = 0;
  int result = 0;
};

struct BpeModel {
  std::vector<BpeMerge> merges;

  int vocab_size() const { return kByteVocab + 1 + static_cast<int>(merges.size()); }
};

struct BpeTrainResult {
  BpeModel model;
  /// False when training stopped early because no pair occurred twice.
  bool reached_target = true;
};

/// Learns merges greedily: repeatedly merge the most frequent adjacent
/// pair (smallest (left, right) id pair on ties) until the vocabulary
/// reaches `target_vocab` or no pair occurs at least twice. Pairs never
/// cross the document separator.
BpeTrainResult train_bpe(std::string_view corpus, int target_vocab);

/// Byte tokenization plus the learned merges, applied in training order
/// with left-to-right non-overlapping replacement. Occurrences of the
/// literal separator text map to the separator id.
std::vector<int> encode(const BpeModel& model, std::string_view text);

/// Inverse of encode for any token sequence; unknown ids are a hard error.
std::string decode(const BpeModel& model, std::span<const int> tokens);

/// Text model file: a vocab_size header line, then one "left right result"
/// line per merge in order.
void save_bpe(const BpeModel& model, const std::string& path);
BpeModel load_bpe(const std::string& path);
std::string bpe_to_text(const BpeModel& model);
BpeModel bpe_from_text(const std::string& text);

}  // namespace lrne
