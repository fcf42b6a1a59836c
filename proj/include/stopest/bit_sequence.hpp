#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stopest/error.hpp"

namespace stopest {

/// Anything that can hand out the next symbol of a binary process.
template <class S>
concept BitSource = requires(S& s) {
  { s.next_bit() } -> std::convertible_to<bool>;
};

/// A source that can also emit 64 symbols at once, x_i in bit i.
template <class S>
concept WordSource = BitSource<S> && requires(S& s) {
  { s.next_word() } -> std::convertible_to<std::uint64_t>;
};

/// Random-access read view over bits: `size()` plus `operator[]`.
template <class V>
concept BitView = requires(const V& v, std::size_t i) {
  { v.size() } -> std::convertible_to<std::size_t>;
  { v[i] } -> std::convertible_to<bool>;
};

/// Replays a fixed list of symbols; reading past the end is an error.
class ReplaySource {
 public:
  ReplaySource() = default;
  explicit ReplaySource(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
      if (b > 1) throw Error(ErrorCode::InvalidArgument, "replay symbols must be 0 or 1");
    }
  }

  bool next_bit() {
    if (pos_ >= bits_.size()) throw Error(ErrorCode::BudgetExhausted, "replay source ran dry");
    return bits_[pos_++] != 0;
  }

  std::size_t size() const noexcept { return bits_.size(); }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t pos_ = 0;
};

/// Parses an ASCII '0'/'1' string; whitespace and commas are skipped.
inline std::vector<std::uint8_t> parse_bits(std::string_view text) {
  std::vector<std::uint8_t> out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '0' || c == '1') {
      out.push_back(static_cast<std::uint8_t>(c - '0'));
    } else if (c != ' ' && c != ',' && c != '\n' && c != '\t' && c != '\r') {
      throw Error(ErrorCode::InvalidArgument, std::string("unexpected symbol '") + c + "' in bit string");
    }
  }
  return out;
}

/// Append-only packed bit sequence x_0, x_1, ... drawn lazily from a source.
///
/// Symbols are stored 64 per word. The sequence never grows past its budget;
/// once a symbol is generated it never changes. Generation runs ahead of the
/// requested index in small blocks, which changes nothing observable except
/// how many symbols already exist.
template <BitSource Source>
class BitSequence {
 public:
  static constexpr std::uint64_t kLookahead = 4096;

  BitSequence(Source source, std::uint64_t budget) : source_(std::move(source)), budget_(budget) {
    if (budget_ == 0) throw Error(ErrorCode::InvalidArgument, "bit budget must be at least 1");
  }

  std::uint64_t size() const noexcept { return size_; }
  std::uint64_t budget() const noexcept { return budget_; }
  bool full() const noexcept { return size_ >= budget_; }

  bool operator[](std::uint64_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }

  bool at(std::uint64_t i) const {
    if (i >= size_) throw Error(ErrorCode::InvalidArgument, "bit index out of range");
    return (*this)[i];
  }

  /// Makes at least `count` symbols available. Returns false (and fills up to
  /// the budget) when `count` exceeds the budget.
  bool ensure(std::uint64_t count) {
    if (count <= size_) return true;
    const bool fits = count <= budget_;
    const std::uint64_t target = std::min(budget_, std::max(count, size_ + kLookahead));
    grow_to(target);
    return fits;
  }

  std::span<const std::uint64_t> words() const noexcept { return {words_.data(), static_cast<std::size_t>((size_ + 63) / 64)}; }

  Source& source() noexcept { return source_; }
  const Source& source() const noexcept { return source_; }

  std::vector<std::uint8_t> to_bytes(std::uint64_t first, std::uint64_t count) const {
    if (first + count > size_) throw Error(ErrorCode::InvalidArgument, "byte export past end of sequence");
    std::vector<std::uint8_t> out(count);
    for (std::uint64_t i = 0; i < count; ++i) out[i] = (*this)[first + i];
    return out;
  }
  std::vector<std::uint8_t> to_bytes() const { return to_bytes(0, size_); }

  void write_ascii(std::ostream& os) const {
    std::string line;
    line.reserve(size_);
    for (std::uint64_t i = 0; i < size_; ++i) line.push_back((*this)[i] ? '1' : '0');
    os << line << '\n';
  }

  /// Raw packed dump: little-endian words, bit i at position i % 64 of word i / 64.
  void write_packed(std::ostream& os) const {
    for (std::uint64_t w : words()) {
      char buf[8];
      for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((w >> (8 * b)) & 0xffu);
      os.write(buf, 8);
    }
  }

 private:
  void grow_to(std::uint64_t target) {
    if constexpr (WordSource<Source>) {
      // Whole words only, so the stream does not depend on how growth was requested.
      target = std::min(budget_, (target + 63) / 64 * 64);
      while (words_.size() * 64 < target) words_.push_back(source_.next_word());
      if (target % 64 != 0) words_.back() &= (std::uint64_t{1} << (target % 64)) - 1;
      size_ = target;
    } else {
      words_.resize(static_cast<std::size_t>((target + 63) / 64), 0);
      for (std::uint64_t i = size_; i < target; ++i) {
        if (source_.next_bit()) words_[i >> 6] |= std::uint64_t{1} << (i & 63);
      }
      size_ = target;
    }
  }

  Source source_;
  std::uint64_t budget_;
  std::uint64_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// A sequence that replays exactly the given bits, with the budget equal to their count.
inline BitSequence<ReplaySource> replay_sequence(std::vector<std::uint8_t> bits) {
  const auto n = bits.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "replay sequence needs at least one bit");
  BitSequence<ReplaySource> seq(ReplaySource(std::move(bits)), n);
  seq.ensure(n);
  return seq;
}

}  // namespace stopest
