#include "colab/metrics.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace colab {

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& epochs) {
  out << kEpochCsvHeader << '\n';
  for (const auto& r : epochs) {
    out << r.epoch << ',' << format_g9(r.lr) << ',' << format_g9(r.std_acc) << ','
        << format_g9(r.weak_train_acc) << ',' << format_g9(r.weak_test_acc) << ','
        << format_g9(r.strong_test_acc) << ',' << format_g9(r.delta_l2_mean) << ','
        << format_g9(r.input_grad_l2_mean) << ',' << format_g9(r.df2_iters_mean) << ','
        << format_g9(r.df2_norm_mean) << ',' << format_g9(r.loss_gap) << '\n';
  }
}

void write_batch_csv(std::ostream& out, const std::vector<BatchRecord>& batches) {
  out << kBatchCsvHeader << '\n';
  for (const auto& r : batches) {
    out << r.epoch << ',' << r.batch << ',' << format_g9(r.lr) << ',' << format_g9(r.train_loss)
        << ',' << format_g9(r.weak_train_acc) << ',' << format_g9(r.delta_l2_mean) << ','
        << format_g9(r.loss_gap) << ',' << format_g9(r.weak_test_acc) << ','
        << format_g9(r.input_grad_l2_mean) << ',' << format_g9(r.df2_iters_mean) << ','
        << format_g9(r.df2_norm_mean) << '\n';
  }
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("epoch csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::vector<EpochRecord> read_epoch_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("epoch csv: empty input");
  const auto header = split(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  if (!col.count("epoch")) throw std::runtime_error("epoch csv: missing 'epoch' column");

  std::vector<EpochRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("epoch csv line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(cells.size()));
    }
    auto get = [&](const char* name) {
      const auto it = col.find(name);
      return it == col.end() ? 0.0 : to_double(cells[it->second], lineno);
    };
    EpochRecord r;
    const double epoch = get("epoch");
    if (epoch < 0 || epoch != static_cast<double>(static_cast<std::size_t>(epoch))) {
      throw std::runtime_error("epoch csv line " + std::to_string(lineno) + ": bad epoch");
    }
    r.epoch = static_cast<std::size_t>(epoch);
    r.lr = get("lr");
    r.std_acc = get("std_acc");
    r.weak_train_acc = get("weak_train_acc");
    r.weak_test_acc = get("weak_test_acc");
    r.strong_test_acc = get("strong_test_acc");
    r.delta_l2_mean = get("delta_l2_mean");
    r.input_grad_l2_mean = get("input_grad_l2_mean");
    r.df2_iters_mean = get("df2_iters_mean");
    r.df2_norm_mean = get("df2_norm_mean");
    r.loss_gap = get("loss_gap");
    out.push_back(r);
  }
  return out;
}

}  // namespace colab
