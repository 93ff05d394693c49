#include "attnctl/interface.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace attnctl {

namespace {

constexpr double kSimplexTol = 1e-9;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_simplex(const DenseArray& v, const char* what) {
  if (!is_simplex(v, kSimplexTol, /*strict=*/false)) {
    throw DomainError(std::string("effective_attention: ") + what + " is not a simplex");
  }
}

std::string format_param(double value) {
  if (value == std::floor(value) && std::abs(value) < 1e15) {
    return std::to_string(static_cast<long long>(value));
  }
  std::ostringstream out;
  out << value;
  return out.str();
}

}  // namespace

DenseArray uniform_attention(std::size_t regions) {
  if (regions == 0) throw DomainError("uniform_attention: zero regions");
  return DenseArray({regions}, 1.0 / static_cast<double>(regions));
}

void validate_method(const InterfaceMethod& method, std::size_t regions) {
  auto check_ext = [regions](const DenseArray& a) {
    if (a.size() != regions) {
      throw DimensionError("external attention has " + std::to_string(a.size()) + " entries, model has " +
                           std::to_string(regions) + " regions");
    }
    require_simplex(a, "external attention");
  };
  std::visit(overloaded{[](const SelfAttending&) {}, [](const ControlUniform&) {},
                        [&](const Unlimited& m) { check_ext(m.alpha_ext); },
                        [&](const Limited& m) { check_ext(m.alpha_ext); },
                        [&](const Additive& m) {
                          check_ext(m.alpha_ext);
                          if (!std::isfinite(m.phi) || m.phi < 0.0) {
                            throw DomainError("additive attention: phi must be finite and >= 0");
                          }
                        }},
             method);
}

DenseArray effective_attention(std::size_t t, const DenseArray& alpha_model, const InterfaceMethod& method) {
  require_simplex(alpha_model, "model attention");
  return std::visit(
      overloaded{
          [&](const SelfAttending&) { return alpha_model; },
          [&](const Unlimited& m) { return m.alpha_ext; },
          [&](const Limited& m) { return t <= m.steps ? m.alpha_ext : alpha_model; },
          [&](const Additive& m) {
            if (m.alpha_ext.size() != alpha_model.size()) {
              throw DimensionError("additive attention: length mismatch");
            }
            DenseArray out({alpha_model.size()});
            const double denom = m.phi + 1.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
              out[i] = (alpha_model[i] + m.phi * m.alpha_ext[i]) / denom;
            }
            return out;
          },
          [&](const ControlUniform&) { return uniform_attention(alpha_model.size()); },
      },
      method);
}

bool ignores_model_attention(const InterfaceMethod& method) {
  return std::holds_alternative<Unlimited>(method) || std::holds_alternative<ControlUniform>(method);
}

std::string MethodSpec::label() const {
  switch (kind) {
    case MethodKind::Self: return "self";
    case MethodKind::Unlimited: return "unlimited";
    case MethodKind::Limited: return "limited-" + format_param(param);
    case MethodKind::Additive: return "additive-" + format_param(param);
    case MethodKind::Control: return "control";
  }
  return "?";
}

InterfaceMethod MethodSpec::bind(const DenseArray& alpha_ext) const {
  switch (kind) {
    case MethodKind::Self: return SelfAttending{};
    case MethodKind::Unlimited: return Unlimited{alpha_ext};
    case MethodKind::Limited: return Limited{alpha_ext, static_cast<std::size_t>(param)};
    case MethodKind::Additive: return Additive{alpha_ext, param};
    case MethodKind::Control: return ControlUniform{};
  }
  return SelfAttending{};
}

MethodSpec MethodSpec::parse(std::string_view label) {
  auto number_after = [&](std::string_view prefix) -> double {
    const std::string rest(label.substr(prefix.size()));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != rest.size() || rest.empty() || v < 0.0) {
      throw DomainError("bad method label '" + std::string(label) + "'");
    }
    return v;
  };
  if (label == "self") return {MethodKind::Self, 0.0};
  if (label == "unlimited") return {MethodKind::Unlimited, 0.0};
  if (label == "control") return {MethodKind::Control, 0.0};
  if (label.starts_with("limited-")) {
    const double steps = number_after("limited-");
    if (steps != std::floor(steps)) throw DomainError("limited steps must be an integer");
    return {MethodKind::Limited, steps};
  }
  if (label.starts_with("additive-")) return {MethodKind::Additive, number_after("additive-")};
  throw DomainError("unknown method label '" + std::string(label) + "'");
}

std::string method_label(const InterfaceMethod& method) {
  return std::visit(overloaded{[](const SelfAttending&) { return std::string("self"); },
                               [](const Unlimited&) { return std::string("unlimited"); },
                               [](const Limited& m) {
                                 return m.steps == kUnboundedSteps ? std::string("limited-inf")
                                                                   : "limited-" + std::to_string(m.steps);
                               },
                               [](const Additive& m) { return "additive-" + format_param(m.phi); },
                               [](const ControlUniform&) { return std::string("control"); }},
                    method);
}

}  // namespace attnctl
