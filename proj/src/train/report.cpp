#include "ahmsa/train/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ahmsa/data/emotion.hpp"
#include "ahmsa/errors.hpp"

namespace ahmsa::train {

namespace {

using Json = nlohmann::ordered_json;

Json summary_json(const MetricsSummary& s) {
  Json acc = Json::array();
  for (double a : s.per_class_accuracy) acc.push_back(std::isnan(a) ? Json(nullptr) : Json(a));
  return {{"uf1", s.uf1},
          {"uar", s.uar},
          {"confusion", s.confusion.rows()},
          {"per_class_accuracy", acc},
          {"warnings", s.warnings}};
}

MetricsSummary summary_from_json(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("confusion")) {
    throw ValidationError(where + ": missing confusion matrix");
  }
  return summarize(data::ConfusionMatrix::from_rows(
      j.at("confusion").get<std::vector<std::vector<std::uint64_t>>>()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

MetricsSummary summarize(const data::ConfusionMatrix& confusion) {
  MetricsSummary s{confusion, 0.0, 0.0, {}, {}};
  s.uf1 = data::uf1(confusion, &s.warnings);
  s.uar = data::uar(confusion, &s.warnings);
  s.per_class_accuracy = data::per_class_accuracy(confusion);
  return s;
}

Json to_json(const MetricsReport& report) {
  Json j;
  j["pooled"] = summary_json(report.pooled);
  Json per_db = Json::object();
  for (const auto& [db, s] : report.per_database) per_db[db] = summary_json(s);
  j["per_database"] = per_db;
  Json history = Json::object();
  Json folds = Json::array();
  Json failures = Json::array();
  for (const auto& f : report.folds) {
    history["fold_" + f.subject] = f.loss_history;
    Json fj = {{"subject", f.subject},
               {"n_train", f.n_train},
               {"n_test", f.n_test},
               {"status", f.ok() ? "ok" : "failed"}};
    if (!f.ok()) {
      fj["error"] = f.error;
      failures.push_back({{"subject", f.subject}, {"error", f.error}});
    }
    folds.push_back(fj);
  }
  j["history"] = history;
  j["folds"] = folds;
  j["failures"] = failures;
  j["config"] = report.config;
  return j;
}

MetricsReport report_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("pooled")) {
    throw ValidationError("metrics report: missing 'pooled' section");
  }
  MetricsReport r;
  try {
    r.pooled = summary_from_json(j.at("pooled"), "pooled");
    if (j.contains("per_database")) {
      for (const auto& [db, s] : j.at("per_database").items()) {
        r.per_database.emplace(db, summary_from_json(s, "per_database." + db));
      }
    }
    if (j.contains("folds")) {
      for (const auto& fj : j.at("folds")) {
        FoldRecord f;
        f.subject = fj.at("subject").get<std::string>();
        f.n_train = fj.value("n_train", std::size_t{0});
        f.n_test = fj.value("n_test", std::size_t{0});
        f.error = fj.value("error", std::string());
        const auto key = "fold_" + f.subject;
        if (j.contains("history") && j.at("history").contains(key)) {
          f.loss_history = j.at("history").at(key).get<std::vector<double>>();
        }
        r.folds.push_back(std::move(f));
      }
    }
    if (j.contains("config")) r.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metrics report: ") + e.what());
  }
  return r;
}

std::vector<std::string> class_names(std::size_t n_classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_classes; ++c) {
    names.push_back(n_classes == data::kNumClasses ? data::class_name(static_cast<int>(c))
                                                   : "class_" + std::to_string(c));
  }
  return names;
}

std::string confusion_csv(const data::ConfusionMatrix& m) {
  const auto names = class_names(m.n_classes());
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < m.n_classes(); ++t) {
    out << names[t];
    for (std::size_t p = 0; p < m.n_classes(); ++p) out << ',' << m.at(t, p);
    out << '\n';
  }
  return out.str();
}

std::string confusion_svg(const data::ConfusionMatrix& m, const std::string& title) {
  const auto names = class_names(m.n_classes());
  const int n = static_cast<int>(m.n_classes());
  const int cell = 110, left = 120, top = 80;
  const int width = left + n * cell + 30, height = top + n * cell + 60;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">"
      << xml_escape(title) << "</text>\n";
  svg << "<text x=\"" << left + n * cell / 2 << "\" y=\"" << top - 30
      << "\" text-anchor=\"middle\" font-size=\"14\">Predicted</text>\n";
  svg << "<text x=\"24\" y=\"" << top + n * cell / 2 << "\" text-anchor=\"middle\" font-size=\"14\" "
      << "transform=\"rotate(-90 24 " << top + n * cell / 2 << ")\">True</text>\n";
  for (int p = 0; p < n; ++p) {
    svg << "<text x=\"" << left + p * cell + cell / 2 << "\" y=\"" << top - 8
        << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(names[p]) << "</text>\n";
  }
  for (int t = 0; t < n; ++t) {
    const auto row = m.row_sum(static_cast<std::size_t>(t));
    svg << "<text x=\"" << left - 8 << "\" y=\"" << top + t * cell + cell / 2 + 5
        << "\" text-anchor=\"end\" font-size=\"13\">" << xml_escape(names[t]) << "</text>\n";
    for (int p = 0; p < n; ++p) {
      const auto count = m.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
      const double frac = row == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(row);
      // White to deep blue.
      const int r = static_cast<int>(std::lround(255 - frac * (255 - 8)));
      const int g = static_cast<int>(std::lround(255 - frac * (255 - 69)));
      const int b = static_cast<int>(std::lround(255 - frac * (255 - 148)));
      char fill[8];
      std::snprintf(fill, sizeof fill, "#%02x%02x%02x", r, g, b);
      const char* ink = frac > 0.5 ? "white" : "black";
      const int x = left + p * cell, y = top + t * cell;
      char pct[16];
      std::snprintf(pct, sizeof pct, "%.1f%%", 100.0 * frac);
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"" << fill << "\" stroke=\"#444\"/>\n";
      svg << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 - 4
          << "\" text-anchor=\"middle\" font-size=\"20\" fill=\"" << ink << "\">" << count
          << "</text>\n";
      svg << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 18
          << "\" text-anchor=\"middle\" font-size=\"13\" fill=\"" << ink << "\">" << pct
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_text(out_dir / "metrics.json", to_json(report).dump(2) + "\n");
  write_text(out_dir / "confusion_pooled.csv", confusion_csv(report.pooled.confusion));
  char title[96];
  std::snprintf(title, sizeof title, "Pooled LOSO confusion (UF1 %.4f, UAR %.4f)",
                report.pooled.uf1, report.pooled.uar);
  write_text(out_dir / "confusion_pooled.svg", confusion_svg(report.pooled.confusion, title));
  for (const auto& [db, s] : report.per_database) {
    write_text(out_dir / ("confusion_" + db + ".csv"), confusion_csv(s.confusion));
  }
}

MetricsReport read_report(const std::filesystem::path& metrics_json) {
  std::ifstream in(metrics_json);
  if (!in) throw IoError("cannot open '" + metrics_json.string() + "'");
  try {
    return report_from_json(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(metrics_json.string() + ": " + e.what());
  }
}

}  // namespace ahmsa::train
