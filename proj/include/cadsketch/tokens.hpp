#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cadsketch/sketch.hpp"

namespace cadsketch {

// Token vocabulary (73 symbols).
namespace token {
inline constexpr int kPadding = 0;
inline constexpr int kStart = 1;
inline constexpr int kEnd = 2;
inline constexpr int kArc = 3;
inline constexpr int kCircle = 4;
inline constexpr int kLine = 5;
inline constexpr int kPoint = 6;
inline constexpr int kParamFirst = 7;
inline constexpr int kParamLast = 70;
inline constexpr int kConstruction = 71;
inline constexpr int kNonConstruction = 72;
inline constexpr int kVocabSize = 73;
inline constexpr int kPerSlot = 8;
inline constexpr int kSequenceLength = kPerSlot * kMaxPrimitives;  // 8n = 128

constexpr bool is_type(int t) { return t >= kArc && t <= kPoint; }
constexpr bool is_param(int t) { return t >= kParamFirst && t <= kParamLast; }
constexpr bool is_construction_flag(int t) { return t == kConstruction || t == kNonConstruction; }
int type_token(PrimitiveKind kind);
std::optional<PrimitiveKind> kind_of(int type_token);
}  // namespace token

// 6-bit uniform quantizer over the normalized domain; bin width 1/64.
inline constexpr int kQuantBits = 6;
inline constexpr int kBinCount = 64;
inline constexpr double kBinWidth = 1.0 / kBinCount;

/// Bin k covers ((k-1)/64, k/64]; out-of-range input is clamped to [0, 63].
int quantize(double v);
/// Right bin edge k/64, so quantize(dequantize(k)) == k. Throws OutOfRange.
double dequantize(int k);

using TokenSlot = std::array<int, token::kPerSlot>;

/// Sixteen primitive slots of eight tokens each. Empty slots are all padding.
struct TokenGrid {
  std::array<TokenSlot, kMaxPrimitives> slots{};

  static constexpr TokenSlot start_slot() { return {token::kStart, 0, 0, 0, 0, 0, 0, 0}; }
  static constexpr TokenSlot end_slot() { return {token::kEnd, 0, 0, 0, 0, 0, 0, 0}; }

  int at(int position) const { return slots[position / token::kPerSlot][position % token::kPerSlot]; }
  int& at(int position) { return slots[position / token::kPerSlot][position % token::kPerSlot]; }

  /// Flat token stream framed by the start and end slots (18 * 8 tokens).
  std::vector<int> framed_stream() const;
  /// Inverse of framed_stream; throws OutOfRange on a bad frame or length.
  static TokenGrid from_framed_stream(const std::vector<int>& stream);

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

TokenSlot tokenize_primitive(const Primitive& primitive);
/// Throws TooManyPrimitives when the sketch exceeds sixteen primitives.
TokenGrid tokenize(const Sketch& sketch);

enum class SlotStatus {
  Empty,
  Valid,
  BadType,
  BadParameter,
  BadConstruction,
  BadPadding,
  Degenerate,
};

struct SlotCheck {
  SlotStatus status = SlotStatus::Empty;
  std::optional<Primitive> primitive;
};

/// Syntax and degeneracy check for one slot; a valid slot carries its primitive.
SlotCheck check_slot(const TokenSlot& slot);

struct DetokenizeResult {
  Sketch sketch;
  std::array<SlotStatus, kMaxPrimitives> status{};
  int dropped = 0;
};

/// Invalid slots are dropped (reported in status), never repaired.
DetokenizeResult detokenize(const TokenGrid& grid);

/// Copy of the grid with every invalid slot replaced by padding.
TokenGrid drop_invalid_slots(const TokenGrid& grid);

}  // namespace cadsketch
