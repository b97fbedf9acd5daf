#include "actguard/episodeio.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace actguard {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kEpisodesFormat = "actguard-episodes";
constexpr std::string_view kEpisodesCsvTag = "# actguard-episodes-csv v1";
constexpr std::string_view kMetricsCsvTag = "# actguard-metrics-csv v1";
constexpr std::string_view kManifestPrefix = "# manifest ";
constexpr std::string_view kViolationsFormat = "actguard-violations";
constexpr std::string_view kReportFormat = "actguard-report";
constexpr std::string_view kSynthFormat = "actguard-synth-config";

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::string type_name(const json& j) { return j.type_name(); }

void require_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!j.is_object()) throw DataError(path + ": expected object, got " + type_name(j));
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw DataError(path + "." + item.key() + ": unknown key");
    }
  }
}

const json& field(const json& j, const char* key, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(path + "." + key + ": missing");
  return *it;
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw DataError(path + ": expected number, got " + type_name(j));
  return j.get<double>();
}

std::int64_t as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw DataError(path + ": expected integer, got " + type_name(j));
  return j.get<std::int64_t>();
}

std::uint64_t as_uint(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) throw DataError(path + ": expected non-negative integer, got " + type_name(j));
  return j.get<std::uint64_t>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw DataError(path + ": expected boolean, got " + type_name(j));
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw DataError(path + ": expected string, got " + type_name(j));
  return j.get<std::string>();
}

json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw DataError(where + "malformed JSON (" + e.what() + ")");
  }
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void require_csv_safe(std::string_view s, const char* what) {
  if (s.find_first_of(",\"\n\r") != std::string_view::npos) {
    throw DataError(std::string(what) + " '" + std::string(s) + "' cannot be written to CSV (contains , \" or newline)");
  }
}

std::optional<double> parse_double_cell(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int_cell(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::optional<bool>> parse_bool_cell(std::string_view s) {
  if (s.empty()) return std::optional<bool>{};
  if (s == "true") return std::optional<bool>{true};
  if (s == "false") return std::optional<bool>{false};
  return std::nullopt;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  return in;
}

template <typename F>
auto with_path(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- episodes

Episode episode_from_json(const json& j, std::size_t line) {
  const std::string where = at_line(line) + "episode";
  require_keys(j, {"episode_id", "success", "family", "source", "actions"}, where);
  Episode ep;
  ep.episode_id = as_string(field(j, "episode_id", where), where + ".episode_id");
  if (j.contains("success")) ep.success = as_bool(j["success"], where + ".success");
  if (j.contains("family")) ep.family = as_string(j["family"], where + ".family");
  if (j.contains("source")) ep.source = as_string(j["source"], where + ".source");

  const json& rows = field(j, "actions", where);
  if (!rows.is_array()) throw DataError(where + ".actions: expected array of action rows");
  if (rows.empty()) throw DataError(where + ".actions: episode has no actions");
  if (!rows[0].is_array() || rows[0].empty()) throw DataError(where + ".actions[0]: expected non-empty array");
  const auto T = static_cast<Eigen::Index>(rows.size());
  const auto D = static_cast<Eigen::Index>(rows[0].size());
  ep.actions.resize(T, D);
  for (Eigen::Index t = 0; t < T; ++t) {
    const json& row = rows[static_cast<std::size_t>(t)];
    const std::string rp = where + ".actions[" + std::to_string(t) + "]";
    if (!row.is_array()) throw DataError(rp + ": expected array");
    if (static_cast<Eigen::Index>(row.size()) != D) {
      throw DataError(rp + ": ragged action row (expected " + std::to_string(D) + " values, got " +
                      std::to_string(row.size()) + ")");
    }
    for (Eigen::Index d = 0; d < D; ++d) {
      ep.actions(t, d) = as_double(row[static_cast<std::size_t>(d)], rp + "[" + std::to_string(d) + "]");
    }
  }
  return ep;
}

json episode_to_json(const Episode& ep) {
  json j;
  j["episode_id"] = ep.episode_id;
  if (ep.success) j["success"] = *ep.success;
  if (ep.family) j["family"] = *ep.family;
  if (ep.source) j["source"] = *ep.source;
  json rows = json::array();
  for (Eigen::Index t = 0; t < ep.actions.rows(); ++t) {
    json row = json::array();
    for (Eigen::Index d = 0; d < ep.actions.cols(); ++d) row.push_back(ep.actions(t, d));
    rows.push_back(std::move(row));
  }
  j["actions"] = std::move(rows);
  return j;
}

Dataset read_episodes_jsonl(std::istream& in) {
  Dataset ds;
  std::optional<Eigen::Index> header_dims;
  bool header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (blank(line)) continue;
    const json j = parse_json(line, at_line(lineno));
    if (!header) {
      const std::string where = at_line(lineno) + "header";
      if (!j.is_object() || !j.contains("format") || j["format"] != kEpisodesFormat) {
        throw DataError(where + ": expected {\"format\":\"actguard-episodes\",...} as the first record");
      }
      require_keys(j, {"format", "version", "dims", "manifest"}, where);
      if (as_int(field(j, "version", where), where + ".version") != 1) {
        throw DataError(where + ".version: unsupported version");
      }
      if (j.contains("dims")) header_dims = as_int(j["dims"], where + ".dims");
      if (j.contains("manifest")) {
        const json& m = j["manifest"];
        if (!m.is_object()) throw DataError(where + ".manifest: expected object");
        for (const auto& item : m.items()) {
          ds.manifest[item.key()] = as_string(item.value(), where + ".manifest." + item.key());
        }
      }
      header = true;
      continue;
    }
    Episode ep = episode_from_json(j, lineno);
    if (!ds.episodes.empty() && ep.dims() != ds.episodes.front().dims()) {
      throw DataError(at_line(lineno) + "episode '" + ep.episode_id + "' has " + std::to_string(ep.dims()) +
                      " dims, dataset has " + std::to_string(ds.episodes.front().dims()));
    }
    ds.episodes.push_back(std::move(ep));
  }
  validate_dataset(ds);
  if (header_dims && ds.dims && *header_dims != *ds.dims) {
    throw DataError("header declares dims=" + std::to_string(*header_dims) + " but episodes have " +
                    std::to_string(*ds.dims));
  }
  if (!ds.dims) ds.dims = header_dims;
  return ds;
}

void write_episodes_jsonl(const Dataset& ds, std::ostream& out) {
  json header;
  header["format"] = kEpisodesFormat;
  header["version"] = 1;
  if (ds.dims) header["dims"] = *ds.dims;
  if (!ds.manifest.empty()) {
    json m = json::object();
    for (const auto& [k, v] : ds.manifest) m[k] = v;
    header["manifest"] = std::move(m);
  }
  out << dump(header) << '\n';
  for (const auto& ep : ds.episodes) out << dump(episode_to_json(ep)) << '\n';
}

Dataset read_episodes_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool tag = false, header = false;
  Eigen::Index D = 0;
  std::vector<std::vector<double>> rows;
  std::set<std::string> finished;

  const auto flush = [&](Episode& ep) {
    if (ep.episode_id.empty() && rows.empty()) return;
    ep.actions.resize(static_cast<Eigen::Index>(rows.size()), D);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      for (Eigen::Index d = 0; d < D; ++d) ep.actions(static_cast<Eigen::Index>(t), d) = rows[t][static_cast<std::size_t>(d)];
    }
    finished.insert(ep.episode_id);
    ds.episodes.push_back(std::move(ep));
    ep = Episode{};
    rows.clear();
  };

  Episode cur;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (!tag) {
      if (blank(line)) continue;
      if (line != kEpisodesCsvTag) throw DataError(at_line(lineno) + "expected '" + std::string(kEpisodesCsvTag) + "'");
      tag = true;
      continue;
    }
    if (!header) {
      if (line.starts_with(kManifestPrefix)) {
        const std::string_view kv = std::string_view(line).substr(kManifestPrefix.size());
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) throw DataError(at_line(lineno) + "manifest line without '='");
        ds.manifest[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
        continue;
      }
      const auto cells = split_csv(line);
      if (cells.size() < 5 || cells[0] != "episode_id" || cells[1] != "t" ||
          cells[cells.size() - 3] != "success" || cells[cells.size() - 2] != "family" || cells.back() != "source") {
        throw DataError(at_line(lineno) + "expected header episode_id,t,j0,...,success,family,source");
      }
      D = static_cast<Eigen::Index>(cells.size() - 5);
      for (Eigen::Index d = 0; d < D; ++d) {
        if (cells[static_cast<std::size_t>(d) + 2] != "j" + std::to_string(d)) {
          throw DataError(at_line(lineno) + "expected column j" + std::to_string(d));
        }
      }
      header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != static_cast<std::size_t>(D) + 5) {
      throw DataError(at_line(lineno) + "ragged row (expected " + std::to_string(D + 5) + " cells, got " +
                      std::to_string(cells.size()) + ")");
    }
    if (D == 0) throw DataError(at_line(lineno) + "data row in a file without action columns");
    const std::string id(cells[0]);
    if (id.empty()) throw DataError(at_line(lineno) + "empty episode_id");
    const auto t = parse_int_cell(cells[1]);
    if (!t) throw DataError(at_line(lineno) + "t: expected integer");
    const auto success = parse_bool_cell(cells[cells.size() - 3]);
    if (!success) throw DataError(at_line(lineno) + "success: expected true, false or empty");
    const std::string_view fam = cells[cells.size() - 2], src = cells.back();

    if (id != cur.episode_id || rows.empty()) {
      if (!rows.empty()) flush(cur);
      if (finished.count(id)) throw DataError(at_line(lineno) + "rows of episode '" + id + "' are not contiguous");
      cur.episode_id = id;
      cur.success = *success;
      cur.family = fam.empty() ? std::nullopt : std::optional<std::string>(fam);
      cur.source = src.empty() ? std::nullopt : std::optional<std::string>(src);
    } else if (cur.success != *success || cur.family.value_or("") != fam || cur.source.value_or("") != src) {
      throw DataError(at_line(lineno) + "episode '" + id + "' changes success/family/source mid-episode");
    }
    if (*t != static_cast<std::int64_t>(rows.size())) {
      throw DataError(at_line(lineno) + "episode '" + id + "': expected t=" + std::to_string(rows.size()));
    }
    std::vector<double> row(static_cast<std::size_t>(D));
    for (Eigen::Index d = 0; d < D; ++d) {
      const auto v = parse_double_cell(cells[static_cast<std::size_t>(d) + 2]);
      if (!v) throw DataError(at_line(lineno) + "j" + std::to_string(d) + ": expected number");
      if (!std::isfinite(*v)) {
        throw DataError(at_line(lineno) + "non-finite value at episode '" + id + "' t=" + std::to_string(*t) +
                        " j" + std::to_string(d));
      }
      row[static_cast<std::size_t>(d)] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (!rows.empty()) flush(cur);
  if (tag && !header) throw DataError("missing CSV header row");
  validate_dataset(ds);
  return ds;
}

void write_episodes_csv(const Dataset& ds, std::ostream& out) {
  const Eigen::Index D = ds.dims.value_or(0);
  out << kEpisodesCsvTag << '\n';
  for (const auto& [k, v] : ds.manifest) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
      throw DataError("manifest entry '" + k + "' cannot be written to CSV");
    }
    out << kManifestPrefix << k << '=' << v << '\n';
  }
  out << "episode_id,t";
  for (Eigen::Index d = 0; d < D; ++d) out << ",j" << d;
  out << ",success,family,source\n";
  for (const auto& ep : ds.episodes) {
    require_csv_safe(ep.episode_id, "episode_id");
    if (ep.family) require_csv_safe(*ep.family, "family");
    if (ep.source) require_csv_safe(*ep.source, "source");
    const std::string success = ep.success ? (*ep.success ? "true" : "false") : "";
    for (Eigen::Index t = 0; t < ep.actions.rows(); ++t) {
      out << ep.episode_id << ',' << t;
      for (Eigen::Index d = 0; d < D; ++d) out << ',' << format_double(ep.actions(t, d));
      out << ',' << success << ',' << ep.family.value_or("") << ',' << ep.source.value_or("") << '\n';
    }
  }
}

// ---------------------------------------------------------------- contracts

json bound_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double bound_from_json(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j == "inf") return std::numeric_limits<double>::infinity();
    if (j == "-inf") return -std::numeric_limits<double>::infinity();
    throw DataError(path + ": expected number, \"inf\" or \"-inf\"");
  }
  return as_double(j, path);
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (double x : v) a.push_back(bound_to_json(x));
  return a;
}

VectorXd vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw DataError(path + ": expected array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = bound_from_json(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

constexpr std::array<std::string_view, 3> kScoreModelKeys = {"center", "scale", "scores"};

bool is_score_model_key(std::string_view k) {
  return std::find(kScoreModelKeys.begin(), kScoreModelKeys.end(), k) != kScoreModelKeys.end();
}

// ---------------------------------------------------------------- reports

json group_to_json(const GroupEvaluation& g) {
  json j;
  j["group"] = g.group;
  j["n"] = g.n;
  j["n_failed"] = g.n_failed;
  json metrics = json::array();
  for (const auto& m : g.metrics) {
    json mj;
    mj["name"] = m.name;
    mj["orientation"] = m.orientation;
    if (m.auroc) mj["auroc"] = *m.auroc;
    if (m.ci) mj["ci"] = json::array({m.ci->lo, m.ci->hi});
    mj["n_failed"] = m.n_failed;
    mj["n_success"] = m.n_success;
    if (!m.note.empty()) mj["note"] = m.note;
    metrics.push_back(std::move(mj));
  }
  j["metrics"] = std::move(metrics);
  const auto& r = g.recommendation;
  j["recommendation"] = {{"primary", r.primary},
                         {"secondary", r.secondary},
                         {"avoid", r.avoid},
                         {"unclassified", r.unclassified},
                         {"thresholds",
                          {{"primary", r.thresholds.primary},
                           {"secondary", r.thresholds.secondary},
                           {"avoid", r.thresholds.avoid}}}};
  return j;
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw DataError(path + ": expected array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

GroupEvaluation group_from_json(const json& j, const std::string& path) {
  require_keys(j, {"group", "n", "n_failed", "metrics", "recommendation"}, path);
  GroupEvaluation g;
  g.group = as_string(field(j, "group", path), path + ".group");
  g.n = as_uint(field(j, "n", path), path + ".n");
  g.n_failed = as_uint(field(j, "n_failed", path), path + ".n_failed");
  const json& ms = field(j, "metrics", path);
  if (!ms.is_array()) throw DataError(path + ".metrics: expected array");
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const std::string mp = path + ".metrics[" + std::to_string(i) + "]";
    const json& mj = ms[i];
    require_keys(mj, {"name", "orientation", "auroc", "ci", "n_failed", "n_success", "note"}, mp);
    MetricScore m;
    m.name = as_string(field(mj, "name", mp), mp + ".name");
    m.orientation = static_cast<int>(as_int(field(mj, "orientation", mp), mp + ".orientation"));
    if (mj.contains("auroc")) m.auroc = as_double(mj["auroc"], mp + ".auroc");
    if (mj.contains("ci")) {
      const json& ci = mj["ci"];
      if (!ci.is_array() || ci.size() != 2) throw DataError(mp + ".ci: expected [lo, hi]");
      m.ci = ConfidenceInterval{as_double(ci[0], mp + ".ci[0]"), as_double(ci[1], mp + ".ci[1]")};
    }
    m.n_failed = as_uint(field(mj, "n_failed", mp), mp + ".n_failed");
    m.n_success = as_uint(field(mj, "n_success", mp), mp + ".n_success");
    if (mj.contains("note")) m.note = as_string(mj["note"], mp + ".note");
    g.metrics.push_back(std::move(m));
  }
  const std::string rp = path + ".recommendation";
  const json& r = field(j, "recommendation", path);
  require_keys(r, {"primary", "secondary", "avoid", "unclassified", "thresholds"}, rp);
  g.recommendation.primary = string_list(field(r, "primary", rp), rp + ".primary");
  g.recommendation.secondary = string_list(field(r, "secondary", rp), rp + ".secondary");
  g.recommendation.avoid = string_list(field(r, "avoid", rp), rp + ".avoid");
  g.recommendation.unclassified = string_list(field(r, "unclassified", rp), rp + ".unclassified");
  const std::string tp = rp + ".thresholds";
  const json& t = field(r, "thresholds", rp);
  require_keys(t, {"primary", "secondary", "avoid"}, tp);
  g.recommendation.thresholds.primary = as_double(field(t, "primary", tp), tp + ".primary");
  g.recommendation.thresholds.secondary = as_double(field(t, "secondary", tp), tp + ".secondary");
  g.recommendation.thresholds.avoid = as_double(field(t, "avoid", tp), tp + ".avoid");
  return g;
}

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

void group_to_text(const GroupEvaluation& g, std::ostream& os) {
  os << "group " << g.group << "  (n=" << g.n << ", failed=" << g.n_failed << ")\n";
  os << "  " << std::left << std::setw(24) << "metric" << std::right << std::setw(7) << "orient" << std::setw(9)
     << "auroc" << std::setw(19) << "ci" << "  note\n";
  for (const auto& m : g.metrics) {
    os << "  " << std::left << std::setw(24) << m.name << std::right << std::setw(7) << (m.orientation > 0 ? "+" : "-")
       << std::setw(9) << (m.auroc ? fixed(*m.auroc, 3) : "-") << std::setw(19)
       << (m.ci ? "[" + fixed(m.ci->lo, 3) + ", " + fixed(m.ci->hi, 3) + "]" : "-") << "  " << m.note << '\n';
  }
  const auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? std::string("-") : s;
  };
  os << "  primary:   " << list(g.recommendation.primary) << '\n';
  os << "  secondary: " << list(g.recommendation.secondary) << '\n';
  os << "  avoid:     " << list(g.recommendation.avoid) << '\n';
}

// ---------------------------------------------------------------- configs

json family_to_json(const FamilyConfig& c) {
  return {{"dims", c.dims},
          {"episode_len", c.episode_len},
          {"workspace_lo", c.workspace_lo},
          {"workspace_hi", c.workspace_hi},
          {"gain", c.gain},
          {"noise_scale", c.noise_scale},
          {"start_hold_max", c.start_hold_max},
          {"codebook_step", c.codebook_step},
          {"grid_jump_prob", c.grid_jump_prob},
          {"smoothing_constant", c.smoothing_constant},
          {"chunk_len", c.chunk_len},
          {"boundary_jump_scale", c.boundary_jump_scale},
          {"oscillation_amplitude", c.oscillation_amplitude},
          {"oscillation_period", c.oscillation_period},
          {"stall_noise", c.stall_noise},
          {"wrong_target_min_distance", c.wrong_target_min_distance},
          {"onset_min", c.onset_min},
          {"onset_max", c.onset_max}};
}

FamilyConfig family_from_json(const json& j, Family family, const std::string& path) {
  require_keys(j,
               {"dims", "episode_len", "workspace_lo", "workspace_hi", "gain", "noise_scale", "start_hold_max",
                "codebook_step", "grid_jump_prob", "smoothing_constant", "chunk_len", "boundary_jump_scale",
                "oscillation_amplitude", "oscillation_period", "stall_noise", "wrong_target_min_distance",
                "onset_min", "onset_max"},
               path);
  FamilyConfig c = default_family_config(family);
  const auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = as_double(j[k], path + "." + k);
  };
  const auto integer = [&](const char* k, int& dst) {
    if (j.contains(k)) dst = static_cast<int>(as_int(j[k], path + "." + k));
  };
  integer("dims", c.dims);
  integer("episode_len", c.episode_len);
  num("workspace_lo", c.workspace_lo);
  num("workspace_hi", c.workspace_hi);
  num("gain", c.gain);
  num("noise_scale", c.noise_scale);
  integer("start_hold_max", c.start_hold_max);
  num("codebook_step", c.codebook_step);
  num("grid_jump_prob", c.grid_jump_prob);
  num("smoothing_constant", c.smoothing_constant);
  integer("chunk_len", c.chunk_len);
  num("boundary_jump_scale", c.boundary_jump_scale);
  num("oscillation_amplitude", c.oscillation_amplitude);
  integer("oscillation_period", c.oscillation_period);
  num("stall_noise", c.stall_noise);
  num("wrong_target_min_distance", c.wrong_target_min_distance);
  num("onset_min", c.onset_min);
  num("onset_max", c.onset_max);
  c.validate();
  return c;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

void validate_dataset(Dataset& ds) {
  std::set<std::string> ids;
  std::optional<Eigen::Index> dims;
  for (const auto& ep : ds.episodes) {
    const std::string name = "episode '" + ep.episode_id + "'";
    if (ep.episode_id.empty()) throw DataError("episode with empty episode_id");
    if (!ids.insert(ep.episode_id).second) throw DataError("duplicate episode_id '" + ep.episode_id + "'");
    if (ep.length() < 1) throw DataError(name + " has no actions");
    if (ep.dims() < 1) throw DataError(name + " has zero-width actions");
    if (dims && *dims != ep.dims()) {
      throw DataError(name + " has " + std::to_string(ep.dims()) + " dims, expected " + std::to_string(*dims));
    }
    dims = ep.dims();
    for (Eigen::Index t = 0; t < ep.length(); ++t) {
      for (Eigen::Index d = 0; d < ep.dims(); ++d) {
        if (!std::isfinite(ep.actions(t, d))) {
          throw DataError(name + ": non-finite value at t=" + std::to_string(t) + " j" + std::to_string(d));
        }
      }
    }
  }
  if (dims) ds.dims = dims;
}

std::optional<EpisodeFormat> episode_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl") return EpisodeFormat::jsonl;
  if (ext == ".csv") return EpisodeFormat::csv;
  return std::nullopt;
}

Dataset read_episodes(std::istream& in, EpisodeFormat format) {
  return format == EpisodeFormat::jsonl ? read_episodes_jsonl(in) : read_episodes_csv(in);
}

Dataset read_episodes(const std::filesystem::path& path, EpisodeFormat format) {
  return with_path(path, [&] {
    auto in = open_in(path);
    return read_episodes(in, format);
  });
}

Dataset read_episodes(const std::filesystem::path& path) {
  const auto fmt = episode_format_for(path);
  if (!fmt) throw DataError(path.string() + ": unknown episode format (expected .jsonl or .csv)");
  return read_episodes(path, *fmt);
}

void write_episodes(const Dataset& dataset, std::ostream& out, EpisodeFormat format) {
  Dataset checked = dataset;
  validate_dataset(checked);
  if (dataset.dims && checked.dims != dataset.dims) throw DataError("dataset dims disagree with its episodes");
  if (format == EpisodeFormat::jsonl) {
    write_episodes_jsonl(checked, out);
  } else {
    write_episodes_csv(checked, out);
  }
}

void write_episodes(const Dataset& dataset, const std::filesystem::path& path, EpisodeFormat format) {
  std::ostringstream os;
  write_episodes(dataset, os, format);
  write_text_file(path, os.str());
}

void write_episodes(const Dataset& dataset, const std::filesystem::path& path) {
  const auto fmt = episode_format_for(path);
  if (!fmt) throw DataError(path.string() + ": unknown episode format (expected .jsonl or .csv)");
  write_episodes(dataset, path, *fmt);
}

SafetyContractd parse_contract(std::string_view text) {
  const std::string p = "contract";
  const json j = parse_json(text, "");
  require_keys(j, {"format_version", "dims", "lower", "upper", "v_max", "provenance", "calibration"}, p);
  if (as_int(field(j, "format_version", p), p + ".format_version") != 1) {
    throw DataError(p + ".format_version: unsupported version");
  }
  SafetyContractd c;
  c.dims = static_cast<Eigen::Index>(as_int(field(j, "dims", p), p + ".dims"));
  c.lower = vector_from_json(field(j, "lower", p), p + ".lower");
  c.upper = vector_from_json(field(j, "upper", p), p + ".upper");
  c.v_max = vector_from_json(field(j, "v_max", p), p + ".v_max");
  const std::string prov = as_string(field(j, "provenance", p), p + ".provenance");
  const auto parsed = parse_provenance(prov);
  if (!parsed) throw DataError(p + ".provenance: unknown value '" + prov + "'");
  c.provenance = *parsed;

  if (const auto issues = validate_contract(c); !issues.empty()) throw DataError(p + ": " + describe(issues));

  if (j.contains("calibration")) {
    const std::string cp = p + ".calibration";
    const json& cal = j["calibration"];
    if (!cal.is_object()) throw DataError(cp + ": expected object");
    int model_keys = 0;
    for (const auto& item : cal.items()) {
      if (is_score_model_key(item.key())) {
        ++model_keys;
        continue;
      }
      c.calibration[item.key()] = as_double(item.value(), cp + "." + item.key());
    }
    if (model_keys != 0 && model_keys != 3) throw DataError(cp + ": center, scale and scores must appear together");
    if (model_keys == 3) {
      ScoreModel<double> m;
      m.center = vector_from_json(cal["center"], cp + ".center");
      m.scale = vector_from_json(cal["scale"], cp + ".scale");
      const json& scores = cal["scores"];
      if (!scores.is_array() || scores.empty()) throw DataError(cp + ".scores: expected non-empty array");
      for (std::size_t i = 0; i < scores.size(); ++i) m.sorted_scores.push_back(as_double(scores[i], cp + ".scores[" + std::to_string(i) + "]"));
      if (m.center.size() != c.dims) throw DataError(cp + ".center: length mismatch with dims");
      if (m.scale.size() != c.dims) throw DataError(cp + ".scale: length mismatch with dims");
      if (!m.center.allFinite()) throw DataError(cp + ".center: non-finite value");
      for (Eigen::Index d = 0; d < c.dims; ++d) {
        if (!(std::isfinite(m.scale[d]) && m.scale[d] > 0.0)) {
          throw DataError(cp + ".scale[" + std::to_string(d) + "]: must be positive and finite");
        }
      }
      for (std::size_t i = 0; i < m.sorted_scores.size(); ++i) {
        if (!std::isfinite(m.sorted_scores[i])) throw DataError(cp + ".scores[" + std::to_string(i) + "]: non-finite");
        if (i > 0 && m.sorted_scores[i] < m.sorted_scores[i - 1]) {
          throw DataError(cp + ".scores: not sorted ascending at index " + std::to_string(i));
        }
      }
      c.score_model = std::move(m);
    }
  }
  return c;
}

std::string contract_to_json(const SafetyContractd& c) {
  if (const auto issues = validate_contract(c); !issues.empty()) throw DataError("contract: " + describe(issues));
  json j;
  j["format_version"] = 1;
  j["dims"] = c.dims;
  j["lower"] = vector_to_json(c.lower);
  j["upper"] = vector_to_json(c.upper);
  j["v_max"] = vector_to_json(c.v_max);
  j["provenance"] = to_string(c.provenance);
  json cal = json::object();
  for (const auto& [k, v] : c.calibration) {
    if (is_score_model_key(k)) throw DataError("contract.calibration." + k + ": reserved key");
    if (!std::isfinite(v)) throw DataError("contract.calibration." + k + ": non-finite value");
    cal[k] = v;
  }
  if (c.score_model) {
    cal["center"] = vector_to_json(c.score_model->center);
    cal["scale"] = vector_to_json(c.score_model->scale);
    cal["scores"] = c.score_model->sorted_scores;
  }
  j["calibration"] = std::move(cal);
  return j.dump(2) + "\n";
}

SafetyContractd read_contract(const std::filesystem::path& path) {
  return with_path(path, [&] { return parse_contract(read_text_file(path)); });
}

void write_contract(const SafetyContractd& contract, const std::filesystem::path& path) {
  write_text_file(path, contract_to_json(contract));
}

std::string violation_log_header() {
  json h;
  h["format"] = kViolationsFormat;
  h["version"] = 1;
  return dump(h);
}

std::string violation_to_json(const ViolationRecord& r) {
  json j;
  j["t"] = r.timestep;
  j["joint"] = r.joint;
  j["kind"] = to_string(r.kind);
  j["raw"] = r.raw;
  j["enforced"] = r.enforced;
  j["magnitude"] = r.magnitude;
  j["episode"] = r.episode;
  return dump(j);
}

void write_violations(std::span<const ViolationRecord> records, std::ostream& out) {
  out << violation_log_header() << '\n';
  for (const auto& r : records) out << violation_to_json(r) << '\n';
}

std::vector<ViolationRecord> read_violations(std::istream& in) {
  std::vector<ViolationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (blank(line)) continue;
    const json j = parse_json(line, at_line(lineno));
    const std::string where = at_line(lineno) + "violation";
    if (!header) {
      if (!j.is_object() || !j.contains("format") || j["format"] != kViolationsFormat) {
        throw DataError(at_line(lineno) + "expected actguard-violations header");
      }
      require_keys(j, {"format", "version"}, where);
      if (as_int(field(j, "version", where), where + ".version") != 1) throw DataError(where + ": unsupported version");
      header = true;
      continue;
    }
    require_keys(j, {"t", "joint", "kind", "raw", "enforced", "magnitude", "episode"}, where);
    ViolationRecord r;
    r.timestep = as_uint(field(j, "t", where), where + ".t");
    r.joint = static_cast<Eigen::Index>(as_uint(field(j, "joint", where), where + ".joint"));
    const std::string kind = as_string(field(j, "kind", where), where + ".kind");
    bool found = false;
    for (auto k : {ViolationKind::bound_lower, ViolationKind::bound_upper, ViolationKind::velocity}) {
      if (to_string(k) == kind) {
        r.kind = k;
        found = true;
      }
    }
    if (!found) throw DataError(where + ".kind: unknown value '" + kind + "'");
    r.raw = as_double(field(j, "raw", where), where + ".raw");
    r.enforced = as_double(field(j, "enforced", where), where + ".enforced");
    r.magnitude = as_double(field(j, "magnitude", where), where + ".magnitude");
    r.episode = static_cast<std::uint32_t>(as_uint(field(j, "episode", where), where + ".episode"));
    out.push_back(r);
  }
  return out;
}

MetricsTable read_metrics(std::istream& in) {
  MetricsTable table;
  std::string line;
  std::size_t lineno = 0;
  bool tag = false;
  std::vector<std::string> columns;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (!tag) {
      if (blank(line)) continue;
      if (line != kMetricsCsvTag) throw DataError(at_line(lineno) + "expected '" + std::string(kMetricsCsvTag) + "'");
      tag = true;
      continue;
    }
    if (columns.empty()) {
      std::set<std::string> seen;
      for (auto cell : split_csv(line)) {
        const std::string name(cell);
        if (std::find(kMetricsColumns.begin(), kMetricsColumns.end(), name) == kMetricsColumns.end()) {
          throw DataError(at_line(lineno) + "unknown column '" + name + "'");
        }
        if (!seen.insert(name).second) throw DataError(at_line(lineno) + "duplicate column '" + name + "'");
        columns.push_back(name);
      }
      if (!seen.count("episode_id")) throw DataError(at_line(lineno) + "missing column 'episode_id'");
      for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
        table.present[k] = seen.count(std::string(metric_name(kAllMetrics[k]))) > 0;
      }
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != columns.size()) {
      throw DataError(at_line(lineno) + "ragged row (expected " + std::to_string(columns.size()) + " cells, got " +
                      std::to_string(cells.size()) + ")");
    }
    MetricsRow row;
    auto& h = row.health;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& col = columns[c];
      const std::string_view cell = cells[c];
      const std::string where = at_line(lineno) + col;
      const auto real = [&](std::optional<double>& dst) {
        if (cell.empty()) return;
        const auto v = parse_double_cell(cell);
        if (!v || !std::isfinite(*v)) throw DataError(where + ": expected finite number");
        dst = *v;
      };
      const auto count = [&](std::optional<std::int64_t>& dst) {
        if (cell.empty()) return;
        const auto v = parse_int_cell(cell);
        if (!v || *v < 0) throw DataError(where + ": expected non-negative integer");
        dst = *v;
      };
      if (col == "episode_id") {
        if (cell.empty()) throw DataError(where + ": empty episode_id");
        row.episode_id = std::string(cell);
      } else if (col == "family") {
        if (!cell.empty()) row.family = std::string(cell);
      } else if (col == "success") {
        const auto b = parse_bool_cell(cell);
        if (!b) throw DataError(where + ": expected true, false or empty");
        row.success = *b;
      } else if (col == "episode_len") {
        std::optional<std::int64_t> v;
        count(v);
        if (!v) throw DataError(where + ": missing value");
        h.episode_len = *v;
      } else if (col == "momentum_degenerate") {
        const auto b = parse_bool_cell(cell);
        if (!b || !*b) throw DataError(where + ": expected true or false");
        h.coherence_degenerate = **b;
      } else if (col == "reversal_rate") {
        real(h.reversal_rate);
      } else if (col == "jerk_rms") {
        real(h.jerk_rms);
      } else if (col == "jerk_violations") {
        count(h.jerk_violations);
      } else if (col == "momentum_coherence") {
        real(h.momentum_coherence);
      } else if (col == "spectral_energy_ratio") {
        real(h.spectral_energy_ratio);
      } else if (col == "total_variation") {
        real(h.total_variation);
      } else if (col == "stall_steps") {
        count(h.stall_steps);
      } else if (col == "stall_rate") {
        real(h.stall_rate);
      } else if (col == "velocity_violations") {
        count(h.velocity_violations);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  return with_path(path, [&] {
    auto in = open_in(path);
    return read_metrics(in);
  });
}

void write_metrics(const MetricsTable& table, std::ostream& out) {
  const auto present = [&](Metric m) {
    for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
      if (kAllMetrics[k] == m) return table.present[k];
    }
    return false;
  };
  std::vector<std::string_view> columns;
  for (auto col : kMetricsColumns) {
    bool keep = true;
    for (Metric m : kAllMetrics) {
      if (metric_name(m) == col) keep = present(m);
    }
    if (col == "stall_steps") keep = present(Metric::stall_rate);
    if (keep) columns.push_back(col);
  }
  out << kMetricsCsvTag << '\n';
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';

  const auto real = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  const auto count = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& row : table.rows) {
    require_csv_safe(row.episode_id, "episode_id");
    if (row.family) require_csv_safe(*row.family, "family");
    const auto& h = row.health;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string_view col = columns[c];
      std::string cell;
      if (col == "episode_id") cell = row.episode_id;
      else if (col == "family") cell = row.family.value_or("");
      else if (col == "success") cell = row.success ? (*row.success ? "true" : "false") : "";
      else if (col == "episode_len") cell = std::to_string(h.episode_len);
      else if (col == "momentum_degenerate") cell = h.coherence_degenerate ? "true" : "false";
      else if (col == "reversal_rate") cell = real(h.reversal_rate);
      else if (col == "jerk_rms") cell = real(h.jerk_rms);
      else if (col == "jerk_violations") cell = count(h.jerk_violations);
      else if (col == "momentum_coherence") cell = real(h.momentum_coherence);
      else if (col == "spectral_energy_ratio") cell = real(h.spectral_energy_ratio);
      else if (col == "total_variation") cell = real(h.total_variation);
      else if (col == "stall_steps") cell = count(h.stall_steps);
      else if (col == "stall_rate") cell = real(h.stall_rate);
      else if (col == "velocity_violations") cell = count(h.velocity_violations);
      out << (c ? "," : "") << cell;
    }
    out << '\n';
  }
}

void write_metrics(const MetricsTable& table, const std::filesystem::path& path) {
  std::ostringstream os;
  write_metrics(table, os);
  write_text_file(path, os.str());
}

std::string report_to_json(const EvaluationReport& r) {
  json j;
  j["format"] = kReportFormat;
  j["version"] = 1;
  j["n_boot"] = r.n_boot;
  j["level"] = r.level;
  j["seed"] = r.seed;
  j["overall"] = group_to_json(r.overall);
  json fams = json::array();
  for (const auto& g : r.by_family) fams.push_back(group_to_json(g));
  j["by_family"] = std::move(fams);
  json fisher = json::array();
  for (const auto& f : r.fisher_tests) {
    fisher.push_back({{"label", f.label}, {"table", {f.table.a, f.table.b, f.table.c, f.table.d}}, {"p", f.p}});
  }
  j["fisher_tests"] = std::move(fisher);
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

EvaluationReport parse_report(std::string_view text) {
  const std::string p = "report";
  const json j = parse_json(text, "");
  require_keys(j, {"format", "version", "n_boot", "level", "seed", "overall", "by_family", "fisher_tests", "warnings"}, p);
  if (as_string(field(j, "format", p), p + ".format") != kReportFormat) throw DataError(p + ".format: not a report");
  if (as_int(field(j, "version", p), p + ".version") != 1) throw DataError(p + ".version: unsupported version");
  EvaluationReport r;
  r.n_boot = static_cast<int>(as_int(field(j, "n_boot", p), p + ".n_boot"));
  r.level = as_double(field(j, "level", p), p + ".level");
  r.seed = as_uint(field(j, "seed", p), p + ".seed");
  r.overall = group_from_json(field(j, "overall", p), p + ".overall");
  const json& fams = field(j, "by_family", p);
  if (!fams.is_array()) throw DataError(p + ".by_family: expected array");
  for (std::size_t i = 0; i < fams.size(); ++i) r.by_family.push_back(group_from_json(fams[i], p + ".by_family[" + std::to_string(i) + "]"));
  const json& fisher = field(j, "fisher_tests", p);
  if (!fisher.is_array()) throw DataError(p + ".fisher_tests: expected array");
  for (std::size_t i = 0; i < fisher.size(); ++i) {
    const std::string fp = p + ".fisher_tests[" + std::to_string(i) + "]";
    require_keys(fisher[i], {"label", "table", "p"}, fp);
    FisherTest f;
    f.label = as_string(field(fisher[i], "label", fp), fp + ".label");
    const json& t = field(fisher[i], "table", fp);
    if (!t.is_array() || t.size() != 4) throw DataError(fp + ".table: expected [a, b, c, d]");
    f.table = {as_int(t[0], fp + ".table[0]"), as_int(t[1], fp + ".table[1]"), as_int(t[2], fp + ".table[2]"),
               as_int(t[3], fp + ".table[3]")};
    f.p = as_double(field(fisher[i], "p", fp), fp + ".p");
    r.fisher_tests.push_back(std::move(f));
  }
  r.warnings = string_list(field(j, "warnings", p), p + ".warnings");
  return r;
}

std::string report_to_text(const EvaluationReport& r) {
  std::ostringstream os;
  os << "actguard evaluation report (n_boot=" << r.n_boot << ", level=" << r.level << ", seed=" << r.seed << ")\n";
  if (!r.overall.metrics.empty()) {
    os << '\n';
    group_to_text(r.overall, os);
  }
  for (const auto& g : r.by_family) {
    os << '\n';
    group_to_text(g, os);
  }
  if (!r.fisher_tests.empty()) {
    os << "\nfisher exact tests (two-sided)\n";
    for (const auto& f : r.fisher_tests) {
      os << "  " << std::left << std::setw(24) << f.label << std::right << " (" << f.table.a << "," << f.table.b
         << " | " << f.table.c << "," << f.table.d << ")  p=" << fixed(f.p, 4) << '\n';
    }
  }
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

MonitorConfig parse_monitor_config(std::string_view text) {
  const std::string p = "monitor_config";
  const json j = parse_json(text, "");
  require_keys(j,
               {"format_version", "reversal_deadband", "reversal_mode", "coherence_epsilon",
                "spectral_cutoff_fraction", "stall_tau", "stall_min_run", "jerk_threshold"},
               p);
  if (j.contains("format_version") && as_int(j["format_version"], p + ".format_version") != 1) {
    throw DataError(p + ".format_version: unsupported version");
  }
  MonitorConfig c;
  if (j.contains("reversal_deadband")) c.reversal_deadband = as_double(j["reversal_deadband"], p + ".reversal_deadband");
  if (j.contains("reversal_mode")) {
    const std::string mode = as_string(j["reversal_mode"], p + ".reversal_mode");
    if (mode == "delta_sign") c.reversal_mode = ReversalMode::delta_sign;
    else if (mode == "value_sign") c.reversal_mode = ReversalMode::value_sign;
    else throw DataError(p + ".reversal_mode: expected delta_sign or value_sign");
  }
  if (j.contains("coherence_epsilon")) c.coherence_epsilon = as_double(j["coherence_epsilon"], p + ".coherence_epsilon");
  if (j.contains("spectral_cutoff_fraction")) {
    c.spectral_cutoff_fraction = as_double(j["spectral_cutoff_fraction"], p + ".spectral_cutoff_fraction");
  }
  if (j.contains("stall_tau")) c.stall_tau = as_double(j["stall_tau"], p + ".stall_tau");
  if (j.contains("stall_min_run")) c.stall_min_run = static_cast<int>(as_int(j["stall_min_run"], p + ".stall_min_run"));
  if (j.contains("jerk_threshold")) c.jerk_threshold = as_double(j["jerk_threshold"], p + ".jerk_threshold");
  c.validate();
  return c;
}

std::string monitor_config_to_json(const MonitorConfig& c) {
  json j;
  j["format_version"] = 1;
  j["reversal_deadband"] = c.reversal_deadband;
  j["reversal_mode"] = c.reversal_mode == ReversalMode::delta_sign ? "delta_sign" : "value_sign";
  j["coherence_epsilon"] = c.coherence_epsilon;
  j["spectral_cutoff_fraction"] = c.spectral_cutoff_fraction;
  j["stall_tau"] = c.stall_tau;
  j["stall_min_run"] = c.stall_min_run;
  j["jerk_threshold"] = c.jerk_threshold;
  return j.dump(2) + "\n";
}

MonitorConfig read_monitor_config(const std::filesystem::path& path) {
  return with_path(path, [&] { return parse_monitor_config(read_text_file(path)); });
}

SynthSettings default_synth_settings() {
  SynthSettings s;
  for (Family f : kAllFamilies) s.benchmark.families.push_back(default_family_config(f));
  s.benchmark.n_per_family = 200;
  s.benchmark.failure_rate = 0.4;
  s.benchmark.mixture = kDefaultMixture;
  s.benchmark.intensity = 1.0;
  s.benchmark.seed = 20260415;
  s.n_demos = 30;
  s.demo_seed = 7;
  return s;
}

SynthSettings parse_synth_settings(std::string_view text) {
  const std::string p = "synth_config";
  const json j = parse_json(text, "");
  require_keys(j, {"format", "version", "benchmark", "families"}, p);
  if (as_string(field(j, "format", p), p + ".format") != kSynthFormat) throw DataError(p + ".format: not a synth config");
  if (as_int(field(j, "version", p), p + ".version") != 1) throw DataError(p + ".version: unsupported version");

  SynthSettings s = default_synth_settings();
  const std::string bp = p + ".benchmark";
  const json& b = field(j, "benchmark", p);
  require_keys(b, {"n_per_family", "failure_rate", "mixture", "intensity", "seed", "n_demos", "demo_seed"}, bp);
  if (b.contains("n_per_family")) s.benchmark.n_per_family = static_cast<int>(as_int(b["n_per_family"], bp + ".n_per_family"));
  if (b.contains("failure_rate")) s.benchmark.failure_rate = as_double(b["failure_rate"], bp + ".failure_rate");
  if (b.contains("mixture")) {
    const std::string mp = bp + ".mixture";
    const json& m = b["mixture"];
    require_keys(m, {"oscillation", "stall", "wrong_target"}, mp);
    s.benchmark.mixture = {as_double(field(m, "oscillation", mp), mp + ".oscillation"),
                           as_double(field(m, "stall", mp), mp + ".stall"),
                           as_double(field(m, "wrong_target", mp), mp + ".wrong_target")};
  }
  if (b.contains("intensity")) s.benchmark.intensity = as_double(b["intensity"], bp + ".intensity");
  if (b.contains("seed")) s.benchmark.seed = as_uint(b["seed"], bp + ".seed");
  if (b.contains("n_demos")) s.n_demos = static_cast<int>(as_int(b["n_demos"], bp + ".n_demos"));
  if (b.contains("demo_seed")) s.demo_seed = as_uint(b["demo_seed"], bp + ".demo_seed");

  if (j.contains("families")) {
    const std::string fp = p + ".families";
    const json& fams = j["families"];
    if (!fams.is_object() || fams.empty()) throw DataError(fp + ": expected non-empty object");
    s.benchmark.families.clear();
    for (const auto& item : fams.items()) {
      const auto fam = parse_family(item.key());
      if (!fam) throw DataError(fp + "." + item.key() + ": unknown family");
      s.benchmark.families.push_back(family_from_json(item.value(), *fam, fp + "." + item.key()));
    }
  }
  s.benchmark.validate();
  if (s.n_demos < 2) throw ConfigError(bp + ".n_demos: must be at least 2");
  return s;
}

std::string synth_settings_to_json(const SynthSettings& s) {
  json j;
  j["format"] = kSynthFormat;
  j["version"] = 1;
  const auto& b = s.benchmark;
  j["benchmark"] = {{"n_per_family", b.n_per_family},
                    {"failure_rate", b.failure_rate},
                    {"mixture", {{"oscillation", b.mixture[0]}, {"stall", b.mixture[1]}, {"wrong_target", b.mixture[2]}}},
                    {"intensity", b.intensity},
                    {"seed", b.seed},
                    {"n_demos", s.n_demos},
                    {"demo_seed", s.demo_seed}};
  json fams = json::object();
  for (const auto& f : b.families) fams[std::string(to_string(f.family))] = family_to_json(f);
  j["families"] = std::move(fams);
  return j.dump(2) + "\n";
}

SynthSettings read_synth_settings(const std::filesystem::path& path) {
  return with_path(path, [&] { return parse_synth_settings(read_text_file(path)); });
}

}  // namespace actguard
