#include "typtest/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <vector>

namespace typtest {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, int line_no) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

ExternalModel parse_likelihood_csv(std::istream& in, int bits_per_dim) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file");
  const auto header = split_line(strip_cr(line));
  if (header.size() < 2 || header[0] != "id" || header[1] != "loglik") {
    throw ParseError("header must start with 'id,loglik'");
  }
  std::size_t col = 2;
  bool has_sqnorm = false;
  if (col < header.size() && header[col] == "latent_sqnorm") {
    has_sqnorm = true;
    ++col;
  }
  int score_dim = 0;
  while (col < header.size()) {
    const std::string expected = "score_" + std::to_string(score_dim);
    if (header[col] != expected) {
      throw ParseError("unexpected column '" + header[col] + "' (expected '" + expected + "')");
    }
    ++score_dim;
    ++col;
  }
  const std::size_t ncols = header.size();

  // bits/dim -> nats: loglik_nats = loglik_bits_per_dim * d * ln 2
  const double loglik_scale = bits_per_dim > 0 ? bits_per_dim * M_LN2 : 1.0;

  std::vector<LikelihoodRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != ncols) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(ncols) + " columns, got " + std::to_string(cells.size()));
    }
    LikelihoodRecord r;
    r.id = cells[0];
    r.loglik = parse_number(cells[1], line_no) * loglik_scale;
    if (!std::isfinite(r.loglik)) {
      throw ParseError("line " + std::to_string(line_no) + ": non-finite loglik");
    }
    std::size_t c = 2;
    if (has_sqnorm) {
      r.latent_sqnorm = parse_number(cells[c++], line_no);
      if (*r.latent_sqnorm < 0.0) {
        throw ParseError("line " + std::to_string(line_no) + ": negative latent_sqnorm");
      }
    }
    if (score_dim > 0) {
      Eigen::VectorXd s(score_dim);
      for (int j = 0; j < score_dim; ++j) s[j] = parse_number(cells[c++], line_no);
      r.score = std::move(s);
    }
    records.push_back(std::move(r));
  }
  try {
    return ExternalModel(std::move(records),
                         score_dim > 0 ? std::optional<int>(score_dim) : std::nullopt);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
}

ExternalModel load_likelihood_csv(const std::string& path, int bits_per_dim) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_likelihood_csv(in, bits_per_dim);
}

void write_likelihood_csv(std::ostream& out, const ExternalModel& model) {
  const bool has_sqnorm = model.has_latent_sqnorms();
  const bool has_scores = model.has_scores();
  out << "id,loglik";
  if (has_sqnorm) out << ",latent_sqnorm";
  if (has_scores) {
    for (int j = 0; j < *model.dimension; ++j) out << ",score_" << j;
  }
  out << "\n";
  for (const auto& r : model.records) {
    out << r.id << ',' << format_double(r.loglik);
    if (has_sqnorm) out << ',' << format_double(r.latent_sqnorm.value());
    if (has_scores) {
      const auto& s = r.score.value();
      for (Eigen::Index j = 0; j < s.size(); ++j) out << ',' << format_double(s[j]);
    }
    out << "\n";
  }
}

void save_likelihood_csv(const std::string& path, const ExternalModel& model) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  write_likelihood_csv(out, model);
}

}  // namespace typtest
