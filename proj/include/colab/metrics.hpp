#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace colab {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double std_acc = 0.0;
  double weak_train_acc = 0.0;
  double weak_test_acc = 0.0;
  double strong_test_acc = 0.0;
  double delta_l2_mean = 0.0;
  double input_grad_l2_mean = 0.0;
  double df2_iters_mean = 0.0;
  double df2_norm_mean = 0.0;
  double loss_gap = 0.0;
};

struct BatchRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double weak_train_acc = 0.0;
  double delta_l2_mean = 0.0;
  double loss_gap = 0.0;
  double weak_test_acc = 0.0;
  double input_grad_l2_mean = 0.0;
  double df2_iters_mean = 0.0;
  double df2_norm_mean = 0.0;
};

/// One record per completed epoch, plus optional per-batch records.
struct MetricsTrace {
  std::vector<EpochRecord> epochs;
  std::vector<BatchRecord> batches;
};

inline constexpr const char* kEpochCsvHeader =
    "epoch,lr,std_acc,weak_train_acc,weak_test_acc,strong_test_acc,delta_l2_mean,"
    "input_grad_l2_mean,df2_iters_mean,df2_norm_mean,loss_gap";

inline constexpr const char* kBatchCsvHeader =
    "epoch,batch,lr,train_loss,weak_train_acc,delta_l2_mean,loss_gap,weak_test_acc,"
    "input_grad_l2_mean,df2_iters_mean,df2_norm_mean";

/// Floats use 9 significant digits.
void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& epochs);
void write_batch_csv(std::ostream& out, const std::vector<BatchRecord>& batches);

/// Reads an epoch CSV by header name; columns other than `epoch` may be
/// missing and default to 0. Throws on malformed rows.
std::vector<EpochRecord> read_epoch_csv(std::istream& in);

std::string format_g9(double v);

}  // namespace colab
