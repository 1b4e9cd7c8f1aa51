#include "discovery/inference.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <ostream>

#include "discovery/error.hpp"
#include "discovery/parallel.hpp"
#include "discovery/tsv.hpp"

namespace discovery {

std::string to_string(Method method) { return method == Method::one_step ? "one_step" : "step_down"; }

Method parse_method(std::string_view text) {
  if (text == "one_step") return Method::one_step;
  if (text == "step_down") return Method::step_down;
  throw ConfigError("unknown selection method '" + std::string(text) + "'");
}

void InferenceConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie strictly between 0 and 1");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (max_subset_enumeration < 1) throw ConfigError("max_subset_enumeration must be positive");
}

std::size_t InferenceReport::untestable_count() const {
  return static_cast<std::size_t>(std::count_if(features.begin(), features.end(), [](const FeatureResult& f) {
    return f.status == FeatureStatus::untestable;
  }));
}

std::size_t capped_binomial(std::size_t m, std::size_t r, std::size_t cap) {
  if (r > m) return 0;
  r = std::min(r, m - r);
  // C(m, i+1) = C(m, i) * (m - i) / (i + 1) stays integral at every step.
  unsigned __int128 value = 1;
  for (std::size_t i = 0; i < r; ++i) {
    value = value * (m - i) / (i + 1);
    if (value > cap) return cap + 1;
  }
  return static_cast<std::size_t>(value);
}

namespace {

struct Prepared {
  std::vector<std::size_t> columns;  // testable columns, as in the run
  std::vector<double> stat;          // per run-local index, |t| for two-sided
};

Prepared prepare(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config) {
  config.validate();
  if (run.estim_fingerprint() != est.fingerprint) {
    throw InferenceError("bootstrap run and estimates come from different estimation samples");
  }
  if (run.config().side != config.side) throw InferenceError("bootstrap and inference disagree on the side");
  if (run.config().studentize != est.studentized) {
    throw InferenceError("bootstrap and estimates disagree on studentization");
  }
  Prepared prep;
  prep.columns = est.testable_columns();
  if (prep.columns != run.columns()) throw InferenceError("bootstrap run does not cover the testable features");
  if (config.k > prep.columns.size()) {
    throw InferenceError("k=" + std::to_string(config.k) + " exceeds the " + std::to_string(prep.columns.size()) +
                         " testable features");
  }
  for (std::size_t j : prep.columns) {
    const double t = est.t_stats[j];
    prep.stat.push_back(config.side == Side::two_sided ? std::fabs(t) : t);
  }
  return prep;
}

InferenceReport assemble(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config,
                         const Prepared& prep, const std::vector<char>& rejected_local,
                         std::vector<CriticalValue> critical_values, bool approximation) {
  InferenceReport report;
  report.config = config;
  report.n = est.n;
  report.p = est.p();
  report.studentized = est.studentized;
  report.bootstrap_draws = run.n_draws();
  report.bootstrap_seed = run.config().seed;
  report.fingerprint = est.fingerprint;
  report.subset_approximation = approximation;

  const double c1 = critical_values.front().value;
  const double n = static_cast<double>(est.n);
  std::vector<char> rejected(est.p(), 0);
  for (std::size_t r = 0; r < prep.columns.size(); ++r) rejected[prep.columns[r]] = rejected_local[r];

  report.features.resize(est.p());
  for (std::size_t j = 0; j < est.p(); ++j) {
    FeatureResult& f = report.features[j];
    f.theta_hat = est.theta_hat[j];
    if (!est.testable[j]) {
      f.status = FeatureStatus::untestable;
      continue;
    }
    f.t_stat = est.t_stats[j];
    f.rejected = rejected[j] != 0;
    if (config.side == Side::two_sided) {
      const double half =
          est.studentized ? c1 * std::sqrt(est.sigma_hat_diag[j] / n) : c1 / std::sqrt(n);
      f.ci_lower = est.theta_hat[j] - half;
      f.ci_upper = est.theta_hat[j] + half;
    }
  }
  report.critical_values = std::move(critical_values);
  return report;
}

void finish_ids(InferenceReport& report, const FeatureEstimates& est) {
  std::vector<FeatureId> feature_ids = est.feature_ids;
  if (feature_ids.size() != est.p()) {
    feature_ids.resize(est.p());
    std::iota(feature_ids.begin(), feature_ids.end(), FeatureId{0});
  }
  for (std::size_t j = 0; j < report.features.size(); ++j) {
    report.features[j].feature_id = feature_ids[j];
    if (report.features[j].rejected) report.selected.push_back(feature_ids[j]);
  }
}

// Visits the lexicographically ordered size-r subsets of {0..m-1}.
template <typename Fn>
void for_each_subset(std::size_t m, std::size_t r, Fn&& fn) {
  std::vector<std::size_t> idx(r);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    fn(idx);
    if (r == 0) return;
    std::size_t i = r;
    while (i > 0 && idx[i - 1] == m - r + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t t = i; t < r; ++t) idx[t] = idx[t - 1] + 1;
  }
}

}  // namespace

InferenceReport one_step_select(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config) {
  const Prepared prep = prepare(est, run, config);
  CriticalValue c1 = critical_value(run, config.alpha, config.k);
  std::vector<char> rejected(prep.columns.size(), 0);
  for (std::size_t r = 0; r < prep.columns.size(); ++r) rejected[r] = prep.stat[r] > c1.value;
  InferenceConfig echo = config;
  echo.method = Method::one_step;
  InferenceReport report = assemble(est, run, echo, prep, rejected, {c1}, false);
  finish_ids(report, est);
  return report;
}

InferenceReport step_down_select(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config) {
  const Prepared prep = prepare(est, run, config);
  const std::size_t q = prep.columns.size();
  const std::size_t k = config.k;
  const bool absolute = config.side == Side::two_sided;
  const std::size_t B = run.n_draws();

  std::vector<CriticalValue> steps;
  steps.push_back(critical_value(run, config.alpha, k));
  std::vector<char> rejected(q, 0);
  std::size_t n_rejected = 0;
  for (std::size_t r = 0; r < q; ++r) {
    if (prep.stat[r] > steps.back().value) {
      rejected[r] = 1;
      ++n_rejected;
    }
  }
  bool approximation = false;

  while (n_rejected >= k && n_rejected < q) {
    std::vector<std::size_t> in_r;
    std::vector<std::size_t> in_a;
    for (std::size_t r = 0; r < q; ++r) (rejected[r] ? in_r : in_a).push_back(r);

    // Per draw: the k largest values over A (descending, padded with -inf)
    // and the values on every member of R.
    const std::size_t m = in_r.size();
    std::vector<double> top_a(B * k, -std::numeric_limits<double>::infinity());
    std::vector<double> on_r(B * m);
    run.for_each_block([&](std::size_t first, std::size_t count, const double* block) {
      for (std::size_t b = 0; b < count; ++b) {
        const double* row = block + b * q;
        double* top = &top_a[(first + b) * k];
        std::size_t filled = 0;
        for (std::size_t r : in_a) {
          const double v = absolute ? std::fabs(row[r]) : row[r];
          if (filled == k && !(v > top[k - 1])) continue;
          std::size_t pos = filled < k ? filled++ : k - 1;
          while (pos > 0 && top[pos - 1] < v) {
            top[pos] = top[pos - 1];
            --pos;
          }
          top[pos] = v;
        }
        double* vals = &on_r[(first + b) * m];
        for (std::size_t e = 0; e < m; ++e) vals[e] = absolute ? std::fabs(row[in_r[e]]) : row[in_r[e]];
      }
    });

    std::vector<std::vector<std::size_t>> subsets;
    const std::size_t count = capped_binomial(m, k - 1, config.max_subset_enumeration);
    if (count <= config.max_subset_enumeration) {
      subsets.reserve(count);
      for_each_subset(m, k - 1, [&](const std::vector<std::size_t>& idx) { subsets.push_back(idx); });
    } else {
      // Largest statistics first; ties broken by column position.
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return prep.stat[in_r[a]] > prep.stat[in_r[b]]; });
      order.resize(k - 1);
      std::sort(order.begin(), order.end());
      subsets.push_back(order);
      approximation = true;
    }

    std::vector<double> values(subsets.size());
    parallel_for(subsets.size(), run.config().threads, [&](std::size_t begin, std::size_t end) {
      std::vector<double> stats(B);
      std::vector<double> extra(k);
      for (std::size_t s = begin; s < end; ++s) {
        const auto& subset = subsets[s];
        for (std::size_t b = 0; b < B; ++b) {
          const double* vals = &on_r[b * m];
          std::size_t ne = 0;
          for (std::size_t e : subset) extra[ne++] = vals[e];
          std::sort(extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(ne), std::greater<>());
          // k-th largest of the two descending lists.
          const double* top = &top_a[b * k];
          std::size_t ia = 0;
          std::size_t ie = 0;
          double kth = -std::numeric_limits<double>::infinity();
          for (std::size_t t = 0; t < k; ++t) {
            if (ie < ne && (ia >= k || extra[ie] > top[ia])) {
              kth = extra[ie++];
            } else {
              kth = top[ia++];
            }
          }
          stats[b] = kth;
        }
        values[s] = upper_quantile(stats, config.alpha);
      }
    });
    const std::size_t best = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());

    CriticalValue cv;
    cv.value = values[best];
    cv.alpha = config.alpha;
    cv.k = k;
    cv.full = false;
    for (std::size_t r : in_a) cv.subset.push_back(prep.columns[r]);
    for (std::size_t e : subsets[best]) cv.subset.push_back(prep.columns[in_r[e]]);
    std::sort(cv.subset.begin(), cv.subset.end());
    cv.subset_size = cv.subset.size();
    steps.push_back(std::move(cv));

    std::size_t added = 0;
    for (std::size_t r : in_a) {
      if (prep.stat[r] > steps.back().value) {
        rejected[r] = 1;
        ++added;
      }
    }
    if (added == 0) break;
    n_rejected += added;
  }

  InferenceConfig echo = config;
  echo.method = Method::step_down;
  InferenceReport report = assemble(est, run, echo, prep, rejected, std::move(steps), approximation);
  finish_ids(report, est);
  return report;
}

InferenceReport select_features(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config) {
  return config.method == Method::one_step ? one_step_select(est, run, config) : step_down_select(est, run, config);
}

// ---- report files ---------------------------------------------------------

namespace {

nlohmann::json optional_number(const std::optional<double>& value) {
  return value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

std::string status_text(FeatureStatus status) { return status == FeatureStatus::tested ? "tested" : "untestable"; }

}  // namespace

void write_inference_report(const InferenceReport& report, std::ostream& out) {
  nlohmann::ordered_json header;
  header["record"] = "header";
  header["n"] = report.n;
  header["p"] = report.p;
  header["alpha"] = report.config.alpha;
  header["k"] = report.config.k;
  header["side"] = to_string(report.config.side);
  header["method"] = to_string(report.config.method);
  header["studentized"] = report.studentized;
  header["max_subset_enumeration"] = report.config.max_subset_enumeration;
  header["subset_approximation"] = report.subset_approximation;
  header["bootstrap_draws"] = report.bootstrap_draws;
  header["bootstrap_seed"] = report.bootstrap_seed;
  header["estimation_fingerprint"] = report.fingerprint;
  header["untestable"] = report.untestable_count();
  header["selected"] = report.selected;
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < report.critical_values.size(); ++s) {
    const CriticalValue& cv = report.critical_values[s];
    nlohmann::ordered_json step;
    step["step"] = s + 1;
    step["value"] = cv.value;
    step["subset"] = cv.full ? nlohmann::ordered_json("full") : nlohmann::ordered_json(cv.subset_size);
    steps.push_back(std::move(step));
  }
  header["critical_values"] = std::move(steps);
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
  for (const auto& [key, value] : report.echo) echo[key] = value;
  header["config"] = std::move(echo);
  out << header.dump() << '\n';

  for (const FeatureResult& f : report.features) {
    nlohmann::ordered_json record;
    record["feature_id"] = f.feature_id;
    record["theta_hat"] = f.theta_hat;
    record["t_stat"] = optional_number(f.t_stat);
    record["ci_lower"] = optional_number(f.ci_lower);
    record["ci_upper"] = optional_number(f.ci_upper);
    record["rejected"] = f.rejected;
    record["status"] = status_text(f.status);
    out << record.dump() << '\n';
  }
}

InferenceReport read_inference_report(std::istream& in, const std::string& source) {
  InferenceReport report;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  auto optional_field = [](const nlohmann::json& record, const char* name) -> std::optional<double> {
    if (!record.contains(name) || record[name].is_null()) return std::nullopt;
    return record[name].get<double>();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (tsv::strip_cr(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(tsv::strip_cr(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        if (record.value("record", "") != "header") throw ParseError(source, line_no, "missing header record");
        report.n = record.at("n").get<std::size_t>();
        report.p = record.at("p").get<std::size_t>();
        report.config.alpha = record.at("alpha").get<double>();
        report.config.k = record.at("k").get<std::size_t>();
        report.config.side = parse_side(record.at("side").get<std::string>());
        report.config.method = parse_method(record.at("method").get<std::string>());
        report.studentized = record.at("studentized").get<bool>();
        report.subset_approximation = record.value("subset_approximation", false);
        report.bootstrap_draws = record.value("bootstrap_draws", std::size_t{0});
        report.bootstrap_seed = record.value("bootstrap_seed", std::uint64_t{0});
        report.fingerprint = record.value("estimation_fingerprint", std::string{});
        for (const auto& step : record.at("critical_values")) {
          CriticalValue cv;
          cv.value = step.at("value").get<double>();
          cv.alpha = report.config.alpha;
          cv.k = report.config.k;
          cv.full = step.at("subset").is_string();
          cv.subset_size = cv.full ? 0 : step.at("subset").get<std::size_t>();
          report.critical_values.push_back(std::move(cv));
        }
        if (record.contains("config")) {
          for (const auto& [key, value] : record["config"].items()) {
            report.echo.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
          }
        }
        have_header = true;
        continue;
      }
      FeatureResult f;
      f.feature_id = record.at("feature_id").get<FeatureId>();
      f.theta_hat = record.at("theta_hat").get<double>();
      f.t_stat = optional_field(record, "t_stat");
      f.ci_lower = optional_field(record, "ci_lower");
      f.ci_upper = optional_field(record, "ci_upper");
      f.rejected = record.at("rejected").get<bool>();
      const std::string status = record.at("status").get<std::string>();
      if (status == "tested") {
        f.status = FeatureStatus::tested;
      } else if (status == "untestable") {
        f.status = FeatureStatus::untestable;
      } else {
        throw ParseError(source, line_no, "unknown status '" + status + "'");
      }
      if (f.rejected) report.selected.push_back(f.feature_id);
      report.features.push_back(f);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, std::string("malformed report record: ") + e.what());
    } catch (const ConfigError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(source, line_no, "empty inference report");
  std::sort(report.selected.begin(), report.selected.end());
  return report;
}

void write_inference_table(const InferenceReport& report, std::ostream& out) {
  out << "Feature\testimate\tt-stat\n";
  for (const FeatureResult& f : report.features) {
    if (!f.rejected) continue;
    out << f.feature_id << '\t' << tsv::format_fixed(f.theta_hat, 4) << '\t'
        << tsv::format_fixed(f.t_stat.value_or(0.0), 3) << '\n';
  }
}

}  // namespace discovery
