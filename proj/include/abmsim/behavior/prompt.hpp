#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abmsim/popgen/population.hpp"

namespace abmsim {

enum class Action : std::uint8_t { isolate = 0, work = 1 };
inline constexpr std::size_t kActionCount = 2;
std::string_view action_name(Action a) noexcept;

/// Discretisation of the context fed to decision prompts.
struct ContextBinning {
  /// Percent-change bins: <= e0, (e0, e1], (e1, e2), [e2, e3), >= e3.
  std::array<double, 4> change_edges{-25.0, -5.0, 5.0, 25.0};
  /// Value rendered into the prompt for each change bin.
  std::array<int, 5> change_labels{-30, -15, 0, 15, 30};

  /// 0 for fewer than one case, b >= 1 for [2^(b-1), 2^b).
  int cases_bin(double cases) const noexcept;
  /// Lower edge of a cases bin, as rendered into prompts.
  long long cases_label(int bin) const noexcept;
  int change_bin(double change_pct) const noexcept;
};

/// Context of one decision round. Ordering and equality ignore `step`.
struct ContextBin {
  int cases_bin = 0;
  int change_bin = 2;
  int duration_months = 0;
  double payment = 0.0;
  int step = 0;

  bool operator==(const ContextBin& o) const noexcept {
    return cases_bin == o.cases_bin && change_bin == o.change_bin &&
           duration_months == o.duration_months && payment == o.payment;
  }
  std::weak_ordering operator<=>(const ContextBin& o) const noexcept;
  std::string describe() const;
};

/// Attribute labels available to a prompt (absent attributes are unbound).
using AgentProfile = std::array<std::optional<std::string>, kAttributeCount>;

struct Prompt {
  std::string system;
  std::string user;
};

/// Prompt text pieces. `user_text` carries placeholders {gender}, {age},
/// {location}, {occupation}, {income}, {cases}, {change}, {duration},
/// {payment}; the payment sentence is chosen by whether payment > 0.
struct PromptTemplate {
  std::string system_text;
  std::string user_text;
  std::string payment_text;
  std::string no_payment_text;
  std::string isolate_question;
  std::string work_question;
  std::string answer_format;

  /// Standard decision prompt. The occupation/income sentence is included
  /// for whichever of those attributes the profile will bind.
  static PromptTemplate standard(bool with_occupation, bool with_income);
  /// Standard prompt mentioning only the given attributes.
  static PromptTemplate for_attributes(const std::vector<Attribute>& attributes);
};

/// Fill a template. Throws TemplateError("unbound placeholder <name>").
Prompt render_prompt(const PromptTemplate& tmpl, const AgentProfile& profile, const ContextBin& ctx,
                     Action action, const ContextBinning& binning = {});

struct Decision {
  bool answer = false;
  std::string rationale;
};

/// Parse "Yes. <rationale>" / "No. <rationale>" (case-insensitive, leading
/// whitespace tolerated). Throws ParseError otherwise.
Decision parse_decision(std::string_view text);

/// Canonical text form, inverse of parse_decision.
std::string format_decision(const Decision& d);

}  // namespace abmsim
