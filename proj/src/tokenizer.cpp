#include "lrne/tokenizer.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace lrne {

namespace {

std::vector<int> base_tokenize(std::string_view text) {
  std::vector<int> tokens;
  tokens.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, kEndOfTextText.size(), kEndOfTextText) == 0) {
      tokens.push_back(kEndOfTextId);
      i += kEndOfTextText.size();
    } else {
      tokens.push_back(static_cast<unsigned char>(text[i]));
      ++i;
    }
  }
  return tokens;
}

std::vector<int> merge_pass(const std::vector<int>& tokens, const BpeMerge& m) {
  std::vector<int> out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (i + 1 < tokens.size() && tokens[i] == m.left && tokens[i + 1] == m.right) {
      out.push_back(m.result);
      i += 2;
    } else {
      out.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

BpeTrainResult train_bpe(std::string_view corpus, int target_vocab) {
  if (target_vocab < kByteVocab + 1)
    throw std::invalid_argument("target vocabulary must cover all bytes plus the separator");
  BpeTrainResult result;
  std::vector<int> tokens = base_tokenize(corpus);

  while (result.model.vocab_size() < target_vocab) {
    std::unordered_map<std::uint64_t, int> counts;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      if (tokens[i] == kEndOfTextId || tokens[i + 1] == kEndOfTextId) continue;
      const std::uint64_t key =
          (static_cast<std::uint64_t>(tokens[i]) << 32) | static_cast<std::uint32_t>(tokens[i + 1]);
      ++counts[key];
    }
    std::uint64_t best_key = 0;
    int best_count = 1;  // a pair must occur at least twice to be mergeable
    for (const auto& [key, count] : counts) {
      if (count > best_count || (count == best_count && best_count > 1 && key < best_key)) {
        best_key = key;
        best_count = count;
      }
    }
    if (best_count < 2) {
      result.reached_target = false;
      break;
    }
    BpeMerge m;
    m.left = static_cast<int>(best_key >> 32);
    m.right = static_cast<int>(best_key & 0xffffffffu);
    m.result = result.model.vocab_size();
    tokens = merge_pass(tokens, m);
    result.model.merges.push_back(m);
  }
  return result;
}

std::vector<int> encode(const BpeModel& model, std::string_view text) {
  std::vector<int> tokens = base_tokenize(text);
  for (const BpeMerge& m : model.merges) tokens = merge_pass(tokens, m);
  return tokens;
}

std::string decode(const BpeModel& model, std::span<const int> tokens) {
  const int vocab = model.vocab_size();
  std::vector<std::string> expansion;
  expansion.reserve(model.merges.size());
  auto expand = [&](int id) -> std::string {
    if (id < kByteVocab) return std::string(1, static_cast<char>(id));
    if (id == kEndOfTextId) return std::string(kEndOfTextText);
    return expansion[static_cast<std::size_t>(id - kByteVocab - 1)];
  };
  for (const BpeMerge& m : model.merges) expansion.push_back(expand(m.left) + expand(m.right));

  std::string out;
  for (int id : tokens) {
    if (id < 0 || id >= vocab)
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(vocab));
    out += expand(id);
  }
  return out;
}

std::string bpe_to_text(const BpeModel& model) {
  std::ostringstream out;
  out << "vocab_size " << model.vocab_size() << "\n";
  for (const BpeMerge& m : model.merges)
    out << m.left << ' ' << m.right << ' ' << m.result << "\n";
  return out.str();
}

BpeModel bpe_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  int vocab = 0;
  if (!(in >> header >> vocab) || header != "vocab_size")
    throw std::runtime_error("tokenizer model: expected 'vocab_size N' header");
  BpeModel model;
  int left = 0, right = 0, res = 0;
  while (in >> left >> right >> res) {
    const int expected = model.vocab_size();
    if (res != expected)
      throw std::runtime_error("tokenizer model: merge ids must be contiguous from 257");
    if (left < 0 || left >= expected || right < 0 || right >= expected ||
        left == kEndOfTextId || right == kEndOfTextId)
      throw std::runtime_error("tokenizer model: merge references an invalid token id");
    model.merges.push_back(BpeMerge{left, right, res});
  }
  if (model.vocab_size() != vocab)
    throw std::runtime_error("tokenizer model: header vocab_size does not match merge count");
  return model;
}

void save_bpe(const BpeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tokenizer model '" + path + "'");
  out << bpe_to_text(model);
}

BpeModel load_bpe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tokenizer model '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return bpe_from_text(buf.str());
}

}  // namespace lrne
