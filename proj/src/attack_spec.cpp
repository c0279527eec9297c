#include "colab/attack_spec.hpp"

#include <cctype>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

namespace colab {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Rational reduce(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::invalid_argument("rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return {num, den};
}

/// Decimal literal like "-1.25" as an exact fraction.
Rational parse_decimal(std::string_view s) {
  s = trim(s);
  if (s.empty()) throw std::invalid_argument("rational: empty number");
  bool negative = false;
  if (s.front() == '-' || s.front() == '+') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  std::int64_t num = 0, den = 1;
  bool seen_point = false, seen_digit = false;
  int digits = 0;
  for (char c : s) {
    if (c == '.' && !seen_point) {
      seen_point = true;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw std::invalid_argument("rational: unexpected character '" + std::string(1, c) + "'");
    }
    if (++digits > 17) throw std::invalid_argument("rational: too many digits");
    num = num * 10 + (c - '0');
    if (seen_point) den *= 10;
    seen_digit = true;
  }
  if (!seen_digit) throw std::invalid_argument("rational: no digits");
  return reduce(negative ? -num : num, den);
}

bool parse_bool(std::string_view v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("attack spec: '" + key + "' expects true/false");
}

std::size_t parse_count(std::string_view v, const std::string& key) {
  const Rational r = parse_decimal(v);
  if (r.den != 1 || r.num < 0) {
    throw std::invalid_argument("attack spec: '" + key + "' expects a non-negative integer");
  }
  return static_cast<std::size_t>(r.num);
}

AttackMethod method_from_name(std::string_view name) {
  static const std::map<std::string, AttackMethod, std::less<>> names{
      {"none", AttackMethod::none},
      {"standard", AttackMethod::none},
      {"fgsm", AttackMethod::fgsm},
      {"rs_fgsm", AttackMethod::rs_fgsm},
      {"r_plus_fgsm", AttackMethod::r_plus_fgsm},
      {"boundary_rs_fgsm", AttackMethod::boundary_rs_fgsm},
      {"magnified_rs_fgsm", AttackMethod::magnified_rs_fgsm},
      {"diff_rs_fgsm", AttackMethod::diff_rs_fgsm},
      {"pgd", AttackMethod::pgd},
      {"deepfool_l2", AttackMethod::deepfool_l2},
      {"df2", AttackMethod::deepfool_l2},
      {"df_linf_1", AttackMethod::deepfool_linf_1},
      {"rs_df_linf_1", AttackMethod::rs_deepfool_linf_1},
      {"min_scale_fgsm", AttackMethod::min_scale_fgsm},
  };
  const auto it = names.find(name);
  if (it == names.end()) throw std::invalid_argument("attack spec: unknown attack '" + std::string(name) + "'");
  return it->second;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Rational Rational::parse(std::string_view text) {
  text = trim(text);
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_decimal(text);
  const Rational a = parse_decimal(text.substr(0, slash));
  const Rational b = parse_decimal(text.substr(slash + 1));
  if (b.num == 0) throw std::invalid_argument("rational: division by zero in '" + std::string(text) + "'");
  if (a.den == 1 && b.den == 1) {
    // Integer fractions keep their written form, so "10/255" prints back as is.
    return b.num < 0 ? Rational{-a.num, -b.num} : Rational{a.num, b.num};
  }
  return reduce(a.num * b.den, a.den * b.num);
}

std::string Rational::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

Rational Rational::operator*(const Rational& other) const {
  const Rational a = reduce(num, other.den);
  const Rational b = reduce(other.num, den);
  return reduce(a.num * b.num, a.den * b.den);
}

AttackSpec AttackSpec::parse(std::string_view text) {
  text = trim(text);
  AttackSpec spec;
  const auto open = text.find('(');
  const std::string_view name = trim(text.substr(0, open));
  spec.method = method_from_name(name);

  std::map<std::string, std::string> kv;
  if (open != std::string_view::npos) {
    if (text.back() != ')') throw std::invalid_argument("attack spec: missing ')' in '" + std::string(text) + "'");
    std::string_view body = text.substr(open + 1, text.size() - open - 2);
    while (!trim(body).empty()) {
      const auto comma = body.find(',');
      const std::string_view item = trim(body.substr(0, comma));
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw std::invalid_argument("attack spec: expected key=value, got '" + std::string(item) + "'");
      }
      std::string key(trim(item.substr(0, eq)));
      if (kv.count(key)) throw std::invalid_argument("attack spec: duplicate key '" + key + "'");
      kv[key] = std::string(trim(item.substr(eq + 1)));
      if (comma == std::string_view::npos) break;
      body.remove_prefix(comma + 1);
    }
  }

  if (auto it = kv.find("eps"); it != kv.end()) spec.eps = Rational::parse(it->second);
  if (spec.eps.num <= 0) throw std::invalid_argument("attack spec: eps must be positive");

  switch (spec.method) {
    case AttackMethod::pgd: spec.alpha = spec.eps * Rational{1, 4}; break;
    case AttackMethod::r_plus_fgsm: spec.alpha = spec.eps * Rational{1, 2}; break;
    default: spec.alpha = spec.eps; break;
  }

  for (const auto& [key, value] : kv) {
    if (key == "eps") continue;
    if (key == "alpha") {
      const auto star = value.find("eps");
      if (star != std::string::npos) {
        std::string coef = value.substr(0, star);
        while (!coef.empty() && (coef.back() == '*' || std::isspace(static_cast<unsigned char>(coef.back())))) {
          coef.pop_back();
        }
        if (!trim(value.substr(star + 3)).empty()) {
          throw std::invalid_argument("attack spec: cannot parse alpha '" + value + "'");
        }
        spec.alpha = (coef.empty() ? Rational{1, 1} : Rational::parse(coef)) * spec.eps;
      } else {
        spec.alpha = Rational::parse(value);
      }
      if (spec.alpha.num < 0) throw std::invalid_argument("attack spec: alpha must be >= 0");
    } else if (key == "project") {
      spec.project = parse_bool(value, key);
    } else if (key == "clamp") {
      spec.pixel_clamp = parse_bool(value, key);
    } else if (key == "steps") {
      spec.steps = parse_count(value, key);
    } else if (key == "restarts") {
      spec.restarts = parse_count(value, key);
      if (spec.restarts < 1) throw std::invalid_argument("attack spec: restarts must be >= 1");
    } else if (key == "t") {
      spec.t = Rational::parse(value).value();
      if (!(spec.t >= 0.0 && spec.t <= 1.0)) throw std::invalid_argument("attack spec: t must lie in [0,1]");
    } else if (key == "eta") {
      spec.deepfool.eta = Rational::parse(value).value();
    } else if (key == "max_iter") {
      spec.deepfool.max_iterations = parse_count(value, key);
    } else if (key == "grid") {
      spec.grid = parse_count(value, key);
    } else {
      throw std::invalid_argument("attack spec: unknown key '" + key + "'");
    }
  }
  spec.deepfool.validate();
  if (spec.method == AttackMethod::min_scale_fgsm && spec.grid < 2) {
    throw std::invalid_argument("attack spec: grid must be >= 2");
  }
  return spec;
}

ThreatModel AttackSpec::threat_model() const {
  return {eps.value(), alpha.value(), project, pixel_clamp};
}

std::string AttackSpec::str() const {
  if (method == AttackMethod::none) return "none";
  const std::string flags = ",project=" + std::string(project ? "true" : "false") +
                            ",clamp=" + std::string(pixel_clamp ? "true" : "false");
  const std::string name = method_name(method);
  switch (method) {
    case AttackMethod::fgsm:
    case AttackMethod::rs_fgsm:
    case AttackMethod::boundary_rs_fgsm:
    case AttackMethod::magnified_rs_fgsm:
      return name + "(eps=" + eps.str() + ",alpha=" + alpha.str() + flags + ")";
    case AttackMethod::r_plus_fgsm:
      return name + "(eps=" + eps.str() + flags + ")";
    case AttackMethod::diff_rs_fgsm:
      return name + "(eps=" + eps.str() + ",alpha=" + alpha.str() + ",t=" + fmt_double(t) + flags + ")";
    case AttackMethod::pgd:
      return name + "(eps=" + eps.str() + ",alpha=" + alpha.str() + ",steps=" +
             std::to_string(steps) + ",restarts=" + std::to_string(restarts) +
             ",clamp=" + (pixel_clamp ? "true" : "false") + ")";
    case AttackMethod::deepfool_l2:
      return name + "(eta=" + fmt_double(deepfool.eta) + ",max_iter=" +
             std::to_string(deepfool.max_iterations) + ")";
    case AttackMethod::deepfool_linf_1:
      return name + "(eta=" + fmt_double(deepfool.eta) + ")";
    case AttackMethod::rs_deepfool_linf_1:
      return name + "(eps=" + eps.str() + ",eta=" + fmt_double(deepfool.eta) + flags + ")";
    case AttackMethod::min_scale_fgsm:
      return name + "(eps=" + eps.str() + ",grid=" + std::to_string(grid) + flags + ")";
    case AttackMethod::none:
      break;
  }
  return "none";
}

std::string AttackSpec::label() const {
  switch (method) {
    case AttackMethod::none: return "standard";
    case AttackMethod::fgsm: return "FGSM";
    case AttackMethod::rs_fgsm: return project ? "RS-FGSM" : "RS-FGSM-wo-Proj";
    case AttackMethod::r_plus_fgsm: return "R+FGSM";
    case AttackMethod::boundary_rs_fgsm: return project ? "Boundary-RS-FGSM" : "Boundary-RS-FGSM-wo-Proj";
    case AttackMethod::magnified_rs_fgsm: return "Magnified-RS-FGSM";
    case AttackMethod::diff_rs_fgsm: return "Diff-RS-FGSM";
    case AttackMethod::pgd: return "PGD-" + std::to_string(steps) + "-" + std::to_string(restarts);
    case AttackMethod::deepfool_l2: return "DF2";
    case AttackMethod::deepfool_linf_1: return "DFinf-1";
    case AttackMethod::rs_deepfool_linf_1: return "RS-DFinf-1";
    case AttackMethod::min_scale_fgsm: return "MinScale-FGSM";
  }
  return "unknown";
}

Perturbation run_attack(const AttackSpec& spec, const Classifier& clf, const Tensor& x,
                        std::span<const int> labels, std::uint64_t seed, RestartSelect select) {
  const ThreatModel tm = spec.threat_model();
  switch (spec.method) {
    case AttackMethod::none: return Perturbation::make(Tensor(x.shape()), AttackMethod::none, seed, 0);
    case AttackMethod::fgsm: return fgsm(clf, x, labels, tm);
    case AttackMethod::rs_fgsm: return rs_fgsm(clf, x, labels, tm, seed);
    case AttackMethod::r_plus_fgsm: return r_plus_fgsm(clf, x, labels, tm, seed);
    case AttackMethod::boundary_rs_fgsm: return boundary_rs_fgsm(clf, x, labels, tm, seed);
    case AttackMethod::magnified_rs_fgsm: return magnified_rs_fgsm(clf, x, labels, tm, seed);
    case AttackMethod::diff_rs_fgsm: return diff_rs_fgsm(clf, x, labels, tm, spec.t, seed);
    case AttackMethod::pgd: return pgd(clf, x, labels, tm, spec.steps, spec.restarts, seed, select);
    case AttackMethod::deepfool_l2: return deepfool_l2(clf, x, labels, spec.deepfool).perturbation;
    case AttackMethod::deepfool_linf_1: {
      DeepFoolConfig cfg = spec.deepfool;
      cfg.norm = NormMode::linf;
      return deepfool_linf_1(clf, x, labels, cfg);
    }
    case AttackMethod::rs_deepfool_linf_1: {
      DeepFoolConfig cfg = spec.deepfool;
      cfg.norm = NormMode::linf;
      return rs_deepfool_linf_1(clf, x, labels, tm, cfg, seed);
    }
    case AttackMethod::min_scale_fgsm: return min_scale_fgsm(clf, x, labels, tm, spec.grid);
  }
  throw std::logic_error("run_attack: unhandled method");
}

}  // namespace colab
