#include "typtest/calibration_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "typtest/csv.hpp"

namespace typtest {

std::string calibration_to_json(const Calibration& cal) {
  nlohmann::json j;
  j["entropy"] = cal.entropy.value;
  j["entropy_method"] = to_string(cal.entropy.method);
  j["entropy_n"] = cal.entropy.n_used;
  j["M"] = cal.batch_size;
  j["alpha"] = cal.alpha;
  j["K"] = cal.bootstrap_count;
  j["threshold"] = cal.threshold;
  j["seed"] = cal.seed;
  j["quantile_rule"] = cal.quantile_rule;
  j["bootstrap_stats"] = cal.bootstrap_stats;
  j["statistic"] = cal.statistic;
  return j.dump(2) + "\n";
}

Calibration calibration_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("calibration JSON: ") + e.what());
  }
  try {
    Calibration cal;
    cal.entropy.value = j.at("entropy").get<double>();
    cal.entropy.method = entropy_method_from_string(j.at("entropy_method").get<std::string>());
    cal.entropy.n_used = j.value("entropy_n", std::int64_t{0});
    cal.batch_size = j.at("M").get<int>();
    cal.alpha = j.at("alpha").get<double>();
    cal.bootstrap_count = j.at("K").get<int>();
    cal.threshold = j.at("threshold").get<double>();
    cal.seed = j.at("seed").get<std::uint64_t>();
    cal.quantile_rule = j.at("quantile_rule").get<std::string>();
    cal.bootstrap_stats = j.at("bootstrap_stats").get<std::vector<double>>();
    cal.statistic = j.value("statistic", std::string("typicality"));
    if (cal.quantile_rule != "ceil-order-statistic") {
      throw ParseError("unknown quantile_rule '" + cal.quantile_rule + "'");
    }
    if (cal.bootstrap_count != static_cast<int>(cal.bootstrap_stats.size())) {
      throw ParseError("calibration JSON: K does not match bootstrap_stats length");
    }
    if (cal.threshold != quantile_threshold(cal.bootstrap_stats, cal.alpha)) {
      throw ParseError("calibration JSON: threshold inconsistent with bootstrap_stats");
    }
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("calibration JSON: ") + e.what());
  }
}

void save_calibration(const std::string& path, const Calibration& cal) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << calibration_to_json(cal);
}

Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return calibration_from_json(ss.str());
}

}  // namespace typtest
