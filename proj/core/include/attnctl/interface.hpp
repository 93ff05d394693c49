#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <variant>

#include "attnctl/tensor.hpp"

namespace attnctl {

/// The model's own attention decides every step.
struct SelfAttending {};

/// External attention replaces the model's attention at every step.
struct Unlimited {
  DenseArray alpha_ext;
};

/// External attention for steps 1..steps, the model's own afterwards.
struct Limited {
  DenseArray alpha_ext;
  std::size_t steps = 0;
};

/// (alpha_model + phi * alpha_ext) / (phi + 1) at every step.
struct Additive {
  DenseArray alpha_ext;
  double phi = 0.0;
};

/// 1/L everywhere; numerically the same as Unlimited(uniform) but reported
/// under its own label.
struct ControlUniform {};

using InterfaceMethod = std::variant<SelfAttending, Unlimited, Limited, Additive, ControlUniform>;

inline constexpr std::size_t kUnboundedSteps = std::numeric_limits<std::size_t>::max();

/// Every entry exactly 1/L.
DenseArray uniform_attention(std::size_t regions);

/// Attention used at decode step `t` (1-based). Throws DomainError when
/// alpha_model or an embedded external vector is not a simplex.
DenseArray effective_attention(std::size_t t, const DenseArray& alpha_model, const InterfaceMethod& method);

/// Checks the embedded external vector (if any) and parameters.
void validate_method(const InterfaceMethod& method, std::size_t regions);

/// True when the method never consults the model's own attention.
bool ignores_model_attention(const InterfaceMethod& method);

enum class MethodKind { Self, Unlimited, Limited, Additive, Control };

/// A method without its external vector, e.g. parsed from "limited-6" or
/// "additive-3". Experiments bind the vector per record.
struct MethodSpec {
  MethodKind kind = MethodKind::Self;
  double param = 0.0;  // steps for Limited, phi for Additive

  std::string label() const;
  bool needs_external() const { return kind == MethodKind::Unlimited || kind == MethodKind::Limited || kind == MethodKind::Additive; }
  InterfaceMethod bind(const DenseArray& alpha_ext) const;

  static MethodSpec parse(std::string_view label);
  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

std::string method_label(const InterfaceMethod& method);

}  // namespace attnctl
