#include "abmsim/behavior/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "abmsim/core/error.hpp"

namespace abmsim {

std::string_view action_name(Action a) noexcept {
  return a == Action::isolate ? "isolate" : "work";
}

int ContextBinning::cases_bin(double cases) const noexcept {
  if (!(cases >= 1.0)) return 0;
  int b = 1;
  double upper = 2.0;
  while (cases >= upper && b < 62) {
    upper *= 2.0;
    ++b;
  }
  return b;
}

long long ContextBinning::cases_label(int bin) const noexcept {
  return bin <= 0 ? 0 : (1LL << (bin - 1));
}

int ContextBinning::change_bin(double change_pct) const noexcept {
  const auto& e = change_edges;
  if (change_pct <= e[0]) return 0;
  if (change_pct <= e[1]) return 1;
  if (change_pct < e[2]) return 2;
  if (change_pct < e[3]) return 3;
  return 4;
}

std::weak_ordering ContextBin::operator<=>(const ContextBin& o) const noexcept {
  if (auto c = cases_bin <=> o.cases_bin; c != 0) return c;
  if (auto c = change_bin <=> o.change_bin; c != 0) return c;
  if (auto c = duration_months <=> o.duration_months; c != 0) return c;
  if (payment < o.payment) return std::weak_ordering::less;
  if (payment > o.payment) return std::weak_ordering::greater;
  return std::weak_ordering::equivalent;
}

std::string ContextBin::describe() const {
  std::ostringstream os;
  os << "cases_bin=" << cases_bin << " change_bin=" << change_bin
     << " duration=" << duration_months << " payment=" << payment;
  return os.str();
}

namespace {

PromptTemplate build_standard(bool gender, bool age, bool location, bool occupation, bool income) {
  PromptTemplate t;
  t.system_text =
      "There is a novel disease. It spreads through contact. It is more dangerous to older people.\n"
      "People have the option to isolate at home or continue their usual recreational activities "
      "outside.\n"
      "Given this scenario, you must estimate your actions based on\n"
      "    1) the information you are given,\n"
      "    2) what you know about the general population with these attributes.\n\n"
      "\"There isn't enough information\" and \"It is unclear\" are not acceptable answers.\n"
      "Give a \"Yes\" or \"No\" answer, followed by a period. Give one sentence explaining your "
      "choice.";
  std::string who = std::string("You are a ") + (gender ? "{gender}" : "person") +
                    (age ? " of age {age}" : "") +
                    (location ? ", living in the {location} region" : "") + ".";
  if (occupation && income)
    who += " You work in {occupation} industry with a monthly income of {income}.";
  else if (occupation)
    who += " You work in {occupation} industry.";
  else if (income)
    who += " You have a monthly income of {income}.";
  t.user_text = who +
                "\n\nThe number of new cases in your neighborhood is {cases}, which is a {change}% "
                "change from the previous month. It has been {duration} months since the start of "
                "the pandemic.";
  t.payment_text =
      "This month, you have received a stimulus payment of {payment} to support your living "
      "expenses.";
  t.no_payment_text = "This month, you have not received any stimulus payment.";
  t.isolate_question = "Given these factors, do you choose to isolate at home?";
  t.work_question = "Given these factors, are you willing to work this month?";
  t.answer_format =
      "\"There isn't enough information\" and \"It is unclear\" are not acceptable answers.\n"
      "Give a \"Yes\" or \"No\" answer, followed by a period. Give one sentence explaining your "
      "choice.";
  return t;
}

}  // namespace

PromptTemplate PromptTemplate::standard(bool with_occupation, bool with_income) {
  return build_standard(true, true, true, with_occupation, with_income);
}

PromptTemplate PromptTemplate::for_attributes(const std::vector<Attribute>& attributes) {
  auto has = [&](Attribute a) {
    return std::find(attributes.begin(), attributes.end(), a) != attributes.end();
  };
  return build_standard(has(Attribute::gender), has(Attribute::age_band), has(Attribute::borough),
                        has(Attribute::occupation), has(Attribute::income_band));
}

namespace {

std::string format_amount(double v) {
  std::ostringstream os;
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    os << static_cast<long long>(v);
  } else {
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
  }
  return os.str();
}

struct Bindings {
  const AgentProfile& profile;
  const ContextBin& ctx;
  const ContextBinning& binning;

  std::optional<std::string> lookup(std::string_view name) const {
    auto attr = [&](Attribute a) { return profile[static_cast<std::size_t>(a)]; };
    if (name == "gender") return attr(Attribute::gender);
    if (name == "age") return attr(Attribute::age_band);
    if (name == "location") return attr(Attribute::borough);
    if (name == "occupation") return attr(Attribute::occupation);
    if (name == "income") return attr(Attribute::income_band);
    if (name == "cases") return std::to_string(binning.cases_label(ctx.cases_bin));
    if (name == "change") {
      const int c = binning.change_labels.at(static_cast<std::size_t>(ctx.change_bin));
      return (c > 0 ? "+" : "") + std::to_string(c);
    }
    if (name == "duration") return std::to_string(ctx.duration_months);
    if (name == "payment") return format_amount(ctx.payment);
    return std::nullopt;
  }
};

void substitute(std::string_view text, const Bindings& b, std::string& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find('{', i);
    if (open == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    const auto close = text.find('}', open);
    if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in template");
    out.append(text.substr(i, open - i));
    const auto name = text.substr(open + 1, close - open - 1);
    auto value = b.lookup(name);
    if (!value) throw TemplateError("unbound placeholder " + std::string(name));
    out.append(*value);
    i = close + 1;
  }
}

}  // namespace

Prompt render_prompt(const PromptTemplate& tmpl, const AgentProfile& profile, const ContextBin& ctx,
                     Action action, const ContextBinning& binning) {
  if (ctx.duration_months < 0) throw DomainError("render_prompt: negative duration");
  if (ctx.change_bin < 0 || ctx.change_bin > 4) throw DomainError("render_prompt: bad change bin");
  const Bindings b{profile, ctx, binning};
  Prompt p;
  substitute(tmpl.system_text, b, p.system);
  substitute(tmpl.user_text, b, p.user);
  p.user += "\n\n";
  substitute(ctx.payment > 0.0 ? tmpl.payment_text : tmpl.no_payment_text, b, p.user);
  p.user += "\n\n";
  p.user += action == Action::isolate ? tmpl.isolate_question : tmpl.work_question;
  if (!tmpl.answer_format.empty()) {
    p.user += "\n\n";
    p.user += tmpl.answer_format;
  }
  return p;
}

namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Decision parse_decision(std::string_view text) {
  const auto body = trim(text);
  const auto dot = body.find('.');
  const auto token = trim(body.substr(0, dot));
  Decision d;
  if (iequals(token, "yes"))
    d.answer = true;
  else if (iequals(token, "no"))
    d.answer = false;
  else {
    std::string shown(body.substr(0, 60));
    throw ParseError("decision text does not start with Yes/No: '" + shown + "'");
  }
  if (dot != std::string_view::npos) d.rationale = std::string(trim(body.substr(dot + 1)));
  return d;
}

std::string format_decision(const Decision& d) {
  std::string s = d.answer ? "Yes." : "No.";
  if (!d.rationale.empty()) s += " " + d.rationale;
  return s;
}

}  // namespace abmsim
