#include "cadsketch/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cadsketch/error.hpp"

namespace cadsketch {

namespace token {

int type_token(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Arc: return kArc;
    case PrimitiveKind::Circle: return kCircle;
    case PrimitiveKind::Line: return kLine;
    case PrimitiveKind::Point: return kPoint;
  }
  return kPadding;
}

std::optional<PrimitiveKind> kind_of(int type_token) {
  switch (type_token) {
    case kArc: return PrimitiveKind::Arc;
    case kCircle: return PrimitiveKind::Circle;
    case kLine: return PrimitiveKind::Line;
    case kPoint: return PrimitiveKind::Point;
    default: return std::nullopt;
  }
}

}  // namespace token

int quantize(double v) {
  const double bin = std::ceil(v * kBinCount);
  if (!(bin > 0.0)) return 0;  // also absorbs NaN
  if (bin >= kBinCount - 1) return kBinCount - 1;
  return static_cast<int>(bin);
}

double dequantize(int k) {
  if (k < 0 || k >= kBinCount) {
    throw Error(ErrorCode::OutOfRange, "bin index " + std::to_string(k) + " outside [0,63]");
  }
  return static_cast<double>(k) * kBinWidth;
}

std::vector<int> TokenGrid::framed_stream() const {
  std::vector<int> out;
  out.reserve((kMaxPrimitives + 2) * token::kPerSlot);
  const auto append = [&](const TokenSlot& s) { out.insert(out.end(), s.begin(), s.end()); };
  append(start_slot());
  for (const auto& s : slots) append(s);
  append(end_slot());
  return out;
}

TokenGrid TokenGrid::from_framed_stream(const std::vector<int>& stream) {
  constexpr std::size_t expected = (kMaxPrimitives + 2) * token::kPerSlot;
  if (stream.size() != expected) {
    throw Error(ErrorCode::OutOfRange, "framed stream must hold " + std::to_string(expected) + " tokens");
  }
  const auto slot_at = [&](std::size_t i) {
    TokenSlot s{};
    std::copy_n(stream.begin() + static_cast<std::ptrdiff_t>(i * token::kPerSlot), token::kPerSlot, s.begin());
    return s;
  };
  if (slot_at(0) != start_slot() || slot_at(kMaxPrimitives + 1) != end_slot()) {
    throw Error(ErrorCode::OutOfRange, "framed stream lacks start/end slots");
  }
  TokenGrid grid;
  for (int i = 0; i < kMaxPrimitives; ++i) grid.slots[i] = slot_at(i + 1);
  return grid;
}

TokenSlot tokenize_primitive(const Primitive& primitive) {
  TokenSlot slot{};
  slot[0] = token::type_token(primitive.kind);
  const auto values = primitive.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    int bin = quantize(values[i]);
    if (primitive.is_radius(static_cast<int>(i))) bin = std::max(bin, 1);
    slot[i + 1] = token::kParamFirst + bin;
  }
  slot[values.size() + 1] = primitive.construction ? token::kConstruction : token::kNonConstruction;
  return slot;
}

TokenGrid tokenize(const Sketch& sketch) {
  if (sketch.size() > kMaxPrimitives) {
    throw Error(ErrorCode::TooManyPrimitives,
                std::to_string(sketch.size()) + " primitives exceed the limit of " + std::to_string(kMaxPrimitives));
  }
  TokenGrid grid;
  for (std::size_t i = 0; i < sketch.size(); ++i) grid.slots[i] = tokenize_primitive(sketch.primitives[i]);
  return grid;
}

SlotCheck check_slot(const TokenSlot& slot) {
  if (std::all_of(slot.begin(), slot.end(), [](int t) { return t == token::kPadding; })) return {};

  const auto kind = token::kind_of(slot[0]);
  if (!kind) {
    return {slot[0] == token::kPadding ? SlotStatus::BadPadding : SlotStatus::BadType, std::nullopt};
  }
  const int count = param_count(*kind);
  for (int i = 1; i <= count; ++i) {
    if (!token::is_param(slot[i])) return {SlotStatus::BadParameter, std::nullopt};
  }
  if (!token::is_construction_flag(slot[count + 1])) return {SlotStatus::BadConstruction, std::nullopt};
  for (int i = count + 2; i < token::kPerSlot; ++i) {
    if (slot[i] != token::kPadding) return {SlotStatus::BadPadding, std::nullopt};
  }

  const auto bin = [&](int i) { return slot[i] - token::kParamFirst; };
  const auto same_point = [&](int a, int b) { return bin(a) == bin(b) && bin(a + 1) == bin(b + 1); };
  if (*kind == PrimitiveKind::Line && same_point(1, 3)) return {SlotStatus::Degenerate, std::nullopt};
  if (*kind == PrimitiveKind::Arc && (same_point(1, 3) || same_point(1, 5) || same_point(3, 5))) {
    return {SlotStatus::Degenerate, std::nullopt};
  }

  Primitive p;
  p.kind = *kind;
  p.construction = slot[count + 1] == token::kConstruction;
  for (int i = 0; i < count; ++i) {
    int b = bin(i + 1);
    // A zero radius decodes to the smallest representable one.
    if (p.is_radius(i)) b = std::max(b, 1);
    p.params[i] = dequantize(b);
  }
  return {SlotStatus::Valid, p};
}

DetokenizeResult detokenize(const TokenGrid& grid) {
  DetokenizeResult result;
  for (int i = 0; i < kMaxPrimitives; ++i) {
    auto check = check_slot(grid.slots[i]);
    result.status[i] = check.status;
    if (check.primitive) {
      result.sketch.primitives.push_back(*check.primitive);
    } else if (check.status != SlotStatus::Empty) {
      ++result.dropped;
    }
  }
  return result;
}

TokenGrid drop_invalid_slots(const TokenGrid& grid) {
  TokenGrid out = grid;
  for (auto& slot : out.slots) {
    const auto status = check_slot(slot).status;
    if (status != SlotStatus::Valid) slot.fill(token::kPadding);
  }
  return out;
}

}  // namespace cadsketch
