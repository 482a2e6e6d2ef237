#pragma once

/*! \file
 *  \brief Instance text format and JSON conversions.
 *
 *  Text format: a header "<n> <m>" followed by n rows of exactly m
 *  characters from {0,1}, LF-separated, trailing newline optional.
 *  JSON format: {"n": int, "m": int, "rows": ["0101...", ...]}.
 */

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp" // vendored nlohmann/json

#include "pvmms/model.hpp"
#include "pvmms/rational.hpp"

namespace pvmms {

using json = nlohmann::json;

namespace detail {

inline std::size_t parse_decimal(std::string_view s, std::size_t line,
                                 std::size_t col0) {
  if (s.empty())
    throw ParseError(line, col0, "expected a decimal number");
  std::size_t v = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] < '0' || s[k] > '9')
      throw ParseError(line, col0 + k, "expected a decimal digit");
    if (v > 100000000)
      throw ParseError(line, col0 + k, "number too large");
    v = v * 10 + static_cast<std::size_t>(s[k] - '0');
  }
  return v;
}

inline PreferenceMatrix parse_json_matrix(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(1, e.byte, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("n") || !j.contains("m") ||
      !j.contains("rows") || !j["n"].is_number_unsigned() ||
      !j["m"].is_number_unsigned() || !j["rows"].is_array())
    throw ParseError(1, 1, "JSON instance needs integer n, m and a rows array");
  const auto n = j["n"].get<std::size_t>();
  const auto m = j["m"].get<std::size_t>();
  if (n == 0)
    throw ParseError(1, 1, "n must be positive");
  if (j["rows"].size() != n)
    throw ParseError(1, 1, "expected " + std::to_string(n) + " rows, found " +
                               std::to_string(j["rows"].size()));
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (!j["rows"][i].is_string())
      throw ParseError(i + 2, 1, "row " + std::to_string(i + 1) + " is not a string");
    std::string r = j["rows"][i].get<std::string>();
    if (r.size() != m)
      throw ParseError(i + 2, 1, "row " + std::to_string(i + 1) + " has length " +
                                     std::to_string(r.size()) + ", expected " +
                                     std::to_string(m));
    for (std::size_t c = 0; c < r.size(); ++c)
      if (r[c] != '0' && r[c] != '1')
        throw ParseError(i + 2, c + 1, "non-binary character in row " +
                                           std::to_string(i + 1));
    rows.push_back(std::move(r));
  }
  if (n > kMaxAgents)
    throw ParseError(1, 1, "too many agents");
  if (m == 0) {
    return PreferenceMatrix(n, {});
  }
  return PreferenceMatrix::from_rows(rows);
}

} // namespace detail

/// Parses the text or JSON instance format. Rows keep file order.
inline PreferenceMatrix parse_matrix(std::string_view text) {
  std::size_t first = 0;
  while (first < text.size() && std::isspace(static_cast<unsigned char>(text[first])))
    ++first;
  if (first == text.size())
    throw ParseError(1, 1, "empty input");
  if (text[first] == '{')
    return detail::parse_json_matrix(text);

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (!text.empty() && text.back() == '\n')
    lines.pop_back();

  const std::string_view header = lines.front();
  const std::size_t space = header.find(' ');
  if (space == std::string_view::npos)
    throw ParseError(1, header.size() + 1, "header must be \"<n> <m>\"");
  const std::size_t n = detail::parse_decimal(header.substr(0, space), 1, 1);
  const std::size_t m =
      detail::parse_decimal(header.substr(space + 1), 1, space + 2);
  if (n == 0)
    throw ParseError(1, 1, "n must be positive");
  if (n > kMaxAgents)
    throw ParseError(1, 1, "at most " + std::to_string(kMaxAgents) +
                               " agents are supported");
  if (lines.size() - 1 < n)
    throw ParseError(lines.size() + 1, 1,
                     "expected " + std::to_string(n) + " rows, found " +
                         std::to_string(lines.size() - 1));
  if (lines.size() - 1 > n)
    throw ParseError(n + 2, 1, "unexpected content after " + std::to_string(n) +
                                   " rows");

  std::vector<AgentMask> cols(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string_view row = lines[i + 1];
    for (std::size_t c = 0; c < row.size() && c < m; ++c) {
      if (row[c] == '1')
        cols[c] |= AgentMask{1} << i;
      else if (row[c] != '0')
        throw ParseError(i + 2, c + 1, "non-binary character in row " +
                                           std::to_string(i + 1));
    }
    if (row.size() != m)
      throw ParseError(i + 2, std::min(row.size(), m) + 1,
                       "row " + std::to_string(i + 1) + " has length " +
                           std::to_string(row.size()) + ", expected " +
                           std::to_string(m));
  }
  return PreferenceMatrix(n, std::move(cols));
}

/// Inverse of parse_matrix for the text format; always ends with LF.
inline std::string to_text(const PreferenceMatrix &m) {
  std::string s = std::to_string(m.n_agents()) + " " +
                  std::to_string(m.n_decisions()) + "\n";
  for (std::size_t i = 0; i < m.n_agents(); ++i)
    s += m.row_string(i) + "\n";
  return s;
}

inline json to_json(const PreferenceMatrix &m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.n_agents(); ++i)
    rows.push_back(m.row_string(i));
  return json{{"n", m.n_agents()}, {"m", m.n_decisions()}, {"rows", rows}};
}

/// 1-based decision indices per bundle.
inline json to_json(const Partition &p) {
  json out = json::array();
  for (const auto &bundle : p.bundles) {
    json b = json::array();
    for (std::size_t j : bundle)
      b.push_back(j + 1);
    out.push_back(b);
  }
  return out;
}

inline Partition partition_from_json(const json &j) {
  if (!j.is_array())
    throw InvalidArgument("partition must be an array of index arrays");
  Partition p;
  for (const auto &b : j) {
    if (!b.is_array())
      throw InvalidArgument("bundle must be an array of decision indices");
    std::vector<std::size_t> bundle;
    for (const auto &x : b) {
      if (!x.is_number_unsigned() || x.get<std::size_t>() == 0)
        throw InvalidArgument("decision indices are positive integers");
      bundle.push_back(x.get<std::size_t>() - 1);
    }
    p.bundles.push_back(std::move(bundle));
  }
  return p;
}

inline std::string join(const std::vector<std::string> &items,
                        const char *sep = " ") {
  std::string s;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k)
      s += sep;
    s += items[k];
  }
  return s;
}

template <class T> std::string join_numbers(const std::vector<T> &values) {
  std::vector<std::string> items;
  for (const auto &v : values)
    items.push_back(std::to_string(v));
  return join(items);
}

} // namespace pvmms
