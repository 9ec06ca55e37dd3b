#include "poicast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "poicast/common.hpp"

namespace poicast {

namespace {

using nlohmann::ordered_json;

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

void validate_k_values(const std::vector<int>& k_values) {
  if (k_values.empty()) throw ConfigError("k_values must not be empty");
  for (int k : k_values)
    if (k < 1) throw ConfigError("k values must be >= 1");
}

}  // namespace

double accuracy_at_k(const std::vector<std::pair<ForecastRanking, std::string>>& results,
                     const PoiSet& candidates, int k) {
  if (results.empty()) throw ConfigError("accuracy_at_k needs at least one ranking");
  int64_t hits = 0;
  for (const auto& [ranking, truth] : results) {
    if (rank_of(ranking, candidates, truth) <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

EvalReport evaluate(const MethodHandle& method, const Dataset& dataset, const DatasetSplit& split,
                    const std::vector<int>& k_values, std::ostream* dump_stream, int dump_top_n) {
  validate_k_values(k_values);
  if (split.test.empty()) throw ConfigError("evaluation requires a non-empty test partition");

  EvalReport report;
  report.method = method.name;
  report.k_values = k_values;
  std::vector<int64_t> hits(k_values.size(), 0);
  std::vector<int64_t> unseen_hits(k_values.size(), 0);

  for (const TargetRef& target : split.test) {
    const Visit& truth = dataset.histories[target.user_index].visits[target.visit_index];
    ForecastRanking ranking = method.rank(target);
    const int rank = rank_of(ranking, dataset.pois, truth.poi_id);
    const bool unseen = split.unseen_poi_ids.count(truth.poi_id) > 0;
    if (unseen) ++report.unseen_target_count;
    for (size_t i = 0; i < k_values.size(); ++i) {
      if (rank <= k_values[i]) {
        ++hits[i];
        if (unseen) ++unseen_hits[i];
      }
    }
    ++report.target_count;

    if (dump_stream && dump_top_n > 0) {
      ordered_json line;
      line["user_id"] = dataset.histories[target.user_index].user_id;
      line["visit_index"] = target.visit_index;
      line["truth"] = truth.poi_id;
      line["truth_rank"] = rank;
      line["top"] = ordered_json::array();
      for (const std::string& id : top_k(ranking, dataset.pois, dump_top_n)) {
        ordered_json entry;
        entry["poi_id"] = id;
        entry["score"] = ranking.scores(dataset.pois.poi_index.at(id));
        line["top"].push_back(entry);
      }
      *dump_stream << line.dump() << "\n";
    }
  }

  report.accuracy.resize(k_values.size());
  for (size_t i = 0; i < k_values.size(); ++i)
    report.accuracy[i] = static_cast<double>(hits[i]) / static_cast<double>(report.target_count);
  if (report.unseen_target_count > 0) {
    report.unseen_accuracy.resize(k_values.size());
    for (size_t i = 0; i < k_values.size(); ++i)
      report.unseen_accuracy[i] =
          static_cast<double>(unseen_hits[i]) / static_cast<double>(report.unseen_target_count);
  }
  return report;
}

double least_squares_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw ConfigError("slope fit needs at least two points");
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& [x, y] : points) {
    mean_x += x;
    mean_y += y;
  }
  mean_x /= static_cast<double>(points.size());
  mean_y /= static_cast<double>(points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mean_x) * (x - mean_x);
    sxy += (x - mean_x) * (y - mean_y);
  }
  if (sxx == 0.0) throw ConfigError("slope fit needs at least two distinct x values");
  return sxy / sxx;
}

SweepResult sweep_unseen_ratio(const std::vector<NamedMethodFactory>& methods,
                               const Dataset& dataset, const std::vector<double>& ratios,
                               const std::vector<int>& k_values, uint64_t seed,
                               std::ostream* warnings) {
  if (methods.empty()) throw ConfigError("sweep needs at least one method");
  validate_k_values(k_values);
  auto warn = [&](const std::string& msg) {
    if (warnings) *warnings << "warning: " << msg << "\n";
  };

  SweepResult result;
  result.k_values = k_values;
  std::set<int64_t> used_thresholds;
  for (size_t p = 0; p < ratios.size(); ++p) {
    const double ratio = ratios[p];
    if (!(ratio >= 0.0 && ratio <= 1.0))
      throw ConfigError("sweep ratios must lie in [0, 1]");
    int64_t threshold = 0;
    DatasetSplit split;
    const uint64_t point_seed = mix_seed(seed, 0x53570000ULL + p);
    try {
      threshold = find_threshold_for_unseen_ratio(dataset.histories, ratio);
      if (!used_thresholds.insert(threshold).second) {
        warn("sweep ratio " + fmt(ratio, 2) + " lands on an already used threshold; skipped");
        continue;
      }
      split = temporal_split(dataset.histories, threshold, point_seed);
    } catch (const ConfigError& e) {
      warn("sweep ratio " + fmt(ratio, 2) + " skipped: " + e.what());
      continue;
    }

    SweepPoint point;
    point.target_ratio = ratio;
    point.realized_ratio = split.realized_unseen_ratio;
    point.threshold = threshold;
    for (const NamedMethodFactory& factory : methods) {
      MethodHandle handle = factory.make(dataset, split, point_seed);
      EvalReport report = evaluate(handle, dataset, split, k_values);
      point.accuracy[factory.name] = report.accuracy;
    }
    result.points.push_back(std::move(point));
  }

  if (result.points.size() < 2)
    throw ConfigError("sweep realized fewer than two points; widen the ratio list");
  std::sort(result.points.begin(), result.points.end(),
            [](const SweepPoint& a, const SweepPoint& b) {
              return a.realized_ratio < b.realized_ratio;
            });

  for (const NamedMethodFactory& factory : methods) {
    std::vector<double> slopes;
    for (size_t ki = 0; ki < k_values.size(); ++ki) {
      std::vector<std::pair<double, double>> xy;
      for (const SweepPoint& point : result.points)
        xy.emplace_back(point.realized_ratio, point.accuracy.at(factory.name)[ki]);
      slopes.push_back(least_squares_slope(xy));
    }
    result.slopes[factory.name] = std::move(slopes);
  }
  return result;
}

void write_text_file(const std::string& dir, const std::string& name,
                     const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path path = fs::path(dir) / name;
  const fs::path tmp = fs::path(dir) / (name + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp.string() + " into place: " + ec.message());
}

namespace {

constexpr const char* kMethodColors[] = {"#2563eb", "#dc2626", "#059669", "#7c3aed", "#ea580c"};
constexpr const char* kDashPatterns[] = {"", "7 3", "2 2", "8 2 2 2", "1 3"};

}  // namespace

std::string render_histogram_svg(const ProximityPrior& prior) {
  const int width = 720, height = 400;
  const double left = 70, right = 20, top = 36, bottom = 58;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const int n = static_cast<int>(prior.counts.size());
  int64_t max_count = 1;
  for (int64_t c : prior.counts) max_count = std::max(max_count, c);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">Consecutive-visit trip distances</text>\n";

  const double bar_w = plot_w / n;
  for (int i = 0; i < n; ++i) {
    const double h = plot_h * static_cast<double>(prior.counts[i]) / static_cast<double>(max_count);
    const double x = left + i * bar_w;
    const double y = top + plot_h - h;
    svg << "<rect x=\"" << fmt(x, 2) << "\" y=\"" << fmt(y, 2) << "\" width=\""
        << fmt(std::max(bar_w - 1.0, 0.5), 2) << "\" height=\"" << fmt(h, 2)
        << "\" fill=\"#2563eb\"/>\n";
  }

  // axes
  svg << "<line x1=\"" << fmt(left, 2) << "\" y1=\"" << fmt(top, 2) << "\" x2=\"" << fmt(left, 2)
      << "\" y2=\"" << fmt(top + plot_h, 2) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(left, 2) << "\" y1=\"" << fmt(top + plot_h, 2) << "\" x2=\""
      << fmt(left + plot_w, 2) << "\" y2=\"" << fmt(top + plot_h, 2) << "\" stroke=\"black\"/>\n";
  // y ticks: 0, max/2, max
  for (int t = 0; t <= 2; ++t) {
    const double frac = t / 2.0;
    const double y = top + plot_h * (1.0 - frac);
    const int64_t value = static_cast<int64_t>(std::llround(frac * static_cast<double>(max_count)));
    svg << "<text x=\"" << fmt(left - 8, 2) << "\" y=\"" << fmt(y + 4, 2)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << value
        << "</text>\n";
  }
  // x ticks every 10 buckets
  for (int i = 0; i < n; i += 10) {
    const double x = left + i * bar_w;
    svg << "<text x=\"" << fmt(x, 2) << "\" y=\"" << fmt(top + plot_h + 18, 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << fmt(i * prior.bucketing.bucket_width_km, 1) << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">distance (km); "
      << "last bucket collects everything past " << fmt(prior.bucketing.max_distance_km, 1)
      << " km</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string render_sweep_svg(const SweepResult& sweep) {
  const int width = 720, height = 420;
  const double left = 70, right = 210, top = 36, bottom = 58;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double max_x = 0.0, max_y = 0.0;
  for (const SweepPoint& point : sweep.points) {
    max_x = std::max(max_x, point.realized_ratio);
    for (const auto& [name, acc] : point.accuracy)
      for (double a : acc) max_y = std::max(max_y, a);
  }
  max_x = std::max(max_x * 1.05, 0.05);
  max_y = std::max(max_y * 1.1, 0.05);

  auto sx = [&](double x) { return left + plot_w * x / max_x; };
  auto sy = [&](double y) { return top + plot_h * (1.0 - y / max_y); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << (left + plot_w / 2)
      << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << "Accuracy vs unseen-POI ratio</text>\n";

  // axes with 5 ticks each
  svg << "<line x1=\"" << fmt(left, 2) << "\" y1=\"" << fmt(top, 2) << "\" x2=\"" << fmt(left, 2)
      << "\" y2=\"" << fmt(top + plot_h, 2) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(left, 2) << "\" y1=\"" << fmt(top + plot_h, 2) << "\" x2=\""
      << fmt(left + plot_w, 2) << "\" y2=\"" << fmt(top + plot_h, 2) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = max_x * t / 4.0;
    const double fy = max_y * t / 4.0;
    svg << "<text x=\"" << fmt(sx(fx), 2) << "\" y=\"" << fmt(top + plot_h + 18, 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << fmt(fx, 2)
        << "</text>\n";
    svg << "<text x=\"" << fmt(left - 8, 2) << "\" y=\"" << fmt(sy(fy) + 4, 2)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << fmt(fy, 2)
        << "</text>\n";
  }
  svg << "<text x=\"" << (left + plot_w / 2) << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << "realized unseen ratio</text>\n";

  int method_index = 0;
  int legend_row = 0;
  for (const auto& [name, slopes] : sweep.slopes) {
    const char* color = kMethodColors[method_index % 5];
    for (size_t ki = 0; ki < sweep.k_values.size(); ++ki) {
      const char* dash = kDashPatterns[ki % 5];
      std::ostringstream pts;
      for (const SweepPoint& point : sweep.points) {
        pts << fmt(sx(point.realized_ratio), 2) << "," << fmt(sy(point.accuracy.at(name)[ki]), 2)
            << " ";
      }
      svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.8\"";
      if (dash[0] != '\0') svg << " stroke-dasharray=\"" << dash << "\"";
      svg << "/>\n";
      for (const SweepPoint& point : sweep.points) {
        svg << "<circle cx=\"" << fmt(sx(point.realized_ratio), 2) << "\" cy=\""
            << fmt(sy(point.accuracy.at(name)[ki]), 2) << "\" r=\"2.5\" fill=\"" << color
            << "\"/>\n";
      }
      // legend entry
      const double ly = top + 10 + 18.0 * legend_row;
      const double lx = left + plot_w + 16;
      svg << "<line x1=\"" << fmt(lx, 2) << "\" y1=\"" << fmt(ly - 4, 2) << "\" x2=\""
          << fmt(lx + 28, 2) << "\" y2=\"" << fmt(ly - 4, 2) << "\" stroke=\"" << color
          << "\" stroke-width=\"1.8\"";
      if (dash[0] != '\0') svg << " stroke-dasharray=\"" << dash << "\"";
      svg << "/>\n";
      svg << "<text x=\"" << fmt(lx + 34, 2) << "\" y=\"" << fmt(ly, 2)
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << name << " acc@"
          << sweep.k_values[ki] << "</text>\n";
      ++legend_row;
    }
    ++method_index;
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_report(const std::vector<EvalReport>& reports, const ProximityPrior& prior,
                 const DatasetSplit& split, const ReportContext& ctx) {
  if (reports.empty()) throw ConfigError("nothing to report: no evaluations were run");
  const std::vector<int>& k_values = reports.front().k_values;
  for (const EvalReport& r : reports)
    if (r.k_values != k_values)
      throw ConfigError("all reports in one emission must share k_values");

  ordered_json root;
  root["run_id"] = ctx.run_id;
  root["threshold"] = split.threshold;
  root["realized_unseen_ratio"] = split.realized_unseen_ratio;
  root["unseen_poi_count"] = split.unseen_poi_ids.size();
  root["k_values"] = k_values;
  root["methods"] = ordered_json::object();
  for (const EvalReport& r : reports) {
    ordered_json m;
    m["target_count"] = r.target_count;
    m["unseen_target_count"] = r.unseen_target_count;
    m["accuracy"] = ordered_json::object();
    for (size_t i = 0; i < k_values.size(); ++i)
      m["accuracy"]["acc@" + std::to_string(k_values[i])] = r.accuracy[i];
    if (!r.unseen_accuracy.empty()) {
      m["unseen_accuracy"] = ordered_json::object();
      for (size_t i = 0; i < k_values.size(); ++i)
        m["unseen_accuracy"]["acc@" + std::to_string(k_values[i])] = r.unseen_accuracy[i];
    }
    root["methods"][r.method] = std::move(m);
  }
  write_text_file(ctx.output_dir, "results.json", root.dump(2) + "\n");

  std::ostringstream table;
  table << "method,subset";
  for (int k : k_values) table << ",acc@" << k;
  table << "\n";
  for (const EvalReport& r : reports) {
    table << r.method << ",all";
    for (size_t i = 0; i < k_values.size(); ++i) table << "," << fmt(r.accuracy[i], 4);
    table << "\n";
    if (!r.unseen_accuracy.empty()) {
      table << r.method << ",unseen";
      for (size_t i = 0; i < k_values.size(); ++i) table << "," << fmt(r.unseen_accuracy[i], 4);
      table << "\n";
    }
  }
  write_text_file(ctx.output_dir, "table1.csv", table.str());

  write_text_file(ctx.output_dir, "prior_histogram.csv", prior_histogram_csv(prior));
  write_text_file(ctx.output_dir, "prior_histogram.svg", render_histogram_svg(prior));
}

void emit_report(const SweepResult& sweep, const ReportContext& ctx) {
  if (sweep.points.empty()) throw ConfigError("sweep produced no points; nothing to write");

  ordered_json root;
  root["run_id"] = ctx.run_id;
  root["k_values"] = sweep.k_values;
  root["points"] = ordered_json::array();
  for (const SweepPoint& point : sweep.points) {
    ordered_json p;
    p["target_ratio"] = point.target_ratio;
    p["realized_ratio"] = point.realized_ratio;
    p["threshold"] = point.threshold;
    p["accuracy"] = ordered_json::object();
    for (const auto& [name, acc] : point.accuracy) {
      ordered_json m = ordered_json::object();
      for (size_t i = 0; i < sweep.k_values.size(); ++i)
        m["acc@" + std::to_string(sweep.k_values[i])] = acc[i];
      p["accuracy"][name] = std::move(m);
    }
    root["points"].push_back(std::move(p));
  }
  root["slopes"] = ordered_json::object();
  for (const auto& [name, slopes] : sweep.slopes) {
    ordered_json m = ordered_json::object();
    for (size_t i = 0; i < sweep.k_values.size(); ++i)
      m["acc@" + std::to_string(sweep.k_values[i])] = slopes[i];
    root["slopes"][name] = std::move(m);
  }
  write_text_file(ctx.output_dir, "sweep.json", root.dump(2) + "\n");

  std::ostringstream csv;
  csv << "target_ratio,realized_ratio,threshold,method,k,accuracy\n";
  for (const SweepPoint& point : sweep.points) {
    for (const auto& [name, acc] : point.accuracy) {
      for (size_t i = 0; i < sweep.k_values.size(); ++i) {
        csv << fmt(point.target_ratio, 6) << "," << fmt(point.realized_ratio, 6) << ","
            << point.threshold << "," << name << "," << sweep.k_values[i] << ","
            << fmt(acc[i], 6) << "\n";
      }
    }
  }
  write_text_file(ctx.output_dir, "sweep.csv", csv.str());
  write_text_file(ctx.output_dir, "sweep.svg", render_sweep_svg(sweep));
}

}  // namespace poicast
