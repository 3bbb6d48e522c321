#include "tkg/prompt_builder.hpp"

#include <cctype>
#include <cstdio>
#include <unordered_set>

#include "tkg/errors.hpp"

namespace tkg {

const std::string_view kPromptInstruction =
    "You must be able to correctly predict the next {object} from a given text consisting of "
    "multiple quadruplets in the form of \"{time}:[{subject}, {relation}, "
    "{object_label}.{object}]\" and the query in the form of \"{time}:[{subject}, {relation},\" "
    "in the end. You must generate {object_label}.{object}.";

TimeFormat TimeFormat::iso_date(std::string_view epoch) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string text(epoch);
  if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
    throw ConfigError("epoch must be YYYY-MM-DD, got '" + text + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw ConfigError("invalid epoch date '" + text + "'");
  TimeFormat f;
  f.iso_ = true;
  f.epoch_ = std::chrono::sys_days{ymd};
  return f;
}

TimeFormat TimeFormat::integer(std::string prefix) {
  TimeFormat f;
  f.prefix_ = std::move(prefix);
  return f;
}

namespace {

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace

std::string TimeFormat::render(Timestamp t, Timestamp granularity_delta) const {
  if (!iso_) return prefix_ + std::to_string(t);
  if (granularity_delta <= 0) throw ContractError("granularity delta must be positive");
  auto steps = t / granularity_delta;
  if (t % granularity_delta != 0 && t < 0) --steps;
  return format_date(epoch_ + std::chrono::days{steps});
}

std::string TimeFormat::epoch_string() const { return iso_ ? format_date(epoch_) : ""; }

std::string PromptRecord::context() const {
  std::string out;
  for (const auto& line : history_lines) {
    out += line;
    out += '\n';
  }
  out += query_line;
  return out;
}

namespace {

std::string object_label_of_line(std::string_view line) {
  // "{date}: [{subject}, {relation}, {id}.{label}]"
  const auto cut = line.rfind(", ");
  if (cut == std::string_view::npos) return {};
  auto tail = line.substr(cut + 2);
  if (!tail.empty() && tail.back() == ']') tail.remove_suffix(1);
  const auto dot = tail.find('.');
  if (dot == std::string_view::npos || dot == 0) return {};
  for (std::size_t i = 0; i < dot; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(tail[i]))) return {};
  }
  return std::string(tail.substr(dot + 1));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

PromptRecord PromptRecord::from_text(std::string_view prompt,
                                     std::optional<std::string> gold_answer) {
  auto lines = split_lines(prompt);
  if (prompt.empty() || lines.size() < 2) {
    throw ContractError("prompt needs an instruction line and a query line");
  }
  PromptRecord rec;
  rec.instruction = lines.front();
  rec.query_line = lines.back();
  rec.history_lines.assign(lines.begin() + 1, lines.end() - 1);
  for (const auto& line : rec.history_lines) {
    auto label = object_label_of_line(line);
    if (!label.empty()) rec.history_objects.push_back(std::move(label));
  }
  rec.full_prompt = std::string(prompt);
  rec.gold_answer = std::move(gold_answer);
  return rec;
}

std::string render_answer(EntityId id, std::string_view label) {
  return std::to_string(raw(id)) + "." + std::string(label);
}

PromptRecord build_prompt(const TemporalGraph& graph, const Query& query,
                          std::span<const Quadruple> history, const TimeFormat& format) {
  const auto delta = graph.granularity_delta();
  PromptRecord rec;
  rec.instruction = std::string(kPromptInstruction);
  rec.history_lines.reserve(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& q = history[i];
    if (i > 0 && history[i - 1].time > q.time) {
      throw ContractError("history facts must be in ascending time order");
    }
    const auto& object = graph.entity_label(q.object);
    rec.history_lines.push_back(format.render(q.time, delta) + ": [" +
                                graph.entity_label(q.subject) + ", " +
                                graph.relation_label(q.relation) + ", " +
                                render_answer(q.object, object) + "]");
    rec.history_objects.push_back(object);
  }
  rec.query_line = format.render(query.time, delta) + ": [" + graph.entity_label(query.subject) +
                   ", " + graph.relation_label(query.relation) + ",";
  if (query.gold) rec.gold_answer = render_answer(*query.gold, graph.entity_label(*query.gold));

  rec.full_prompt = rec.instruction + "\n" + rec.context();
  return rec;
}

PromptRecord build_prompt(const TemporalGraph& graph, const Query& query,
                          std::span<const FactIndex> history, const TimeFormat& format) {
  std::vector<Quadruple> facts;
  facts.reserve(history.size());
  for (auto fi : history) facts.push_back(graph.fact(fi));
  return build_prompt(graph, query, std::span<const Quadruple>(facts), format);
}

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '.' || u >= 0x80;
}

bool is_label_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return !std::isspace(u) && c != ',' && c != '[' && c != ']' && c != '"';
}

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '\'';
}

}  // namespace

std::vector<ParsedAnswer> parse_answers(std::string_view text) {
  std::vector<ParsedAnswer> out;
  std::unordered_set<std::string> seen;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool starts_number = std::isdigit(static_cast<unsigned char>(text[i])) &&
                               (i == 0 || !is_word_char(text[i - 1]));
    if (!starts_number) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j >= text.size() || text[j] != '.') {
      i = j;
      continue;
    }
    std::size_t k = j + 1;
    while (k < text.size() && is_label_char(text[k])) ++k;
    auto label = text.substr(j + 1, k - j - 1);
    while (!label.empty() && is_trailing_punct(label.back())) label.remove_suffix(1);
    if (!label.empty() && seen.emplace(label).second) {
      out.push_back(ParsedAnswer{std::string(text.substr(i, j - i)), std::string(label)});
    }
    i = k;
  }
  return out;
}

std::vector<std::string> parse_prediction(std::string_view text) {
  std::vector<std::string> out;
  for (auto& a : parse_answers(text)) out.push_back(std::move(a.label));
  return out;
}

}  // namespace tkg
