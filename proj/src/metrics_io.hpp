#pragma once

#include <string>

#include "run_config.hpp"
#include "schedule.hpp"
#include "trainer.hpp"

namespace progtune {

// Per-epoch rows then a summary row carrying the cumulative updated-parameter
// count and the reduction fraction vs full fine-tuning.
// CSV columns, in order: epoch, loss, train_acc, eval_acc, lr_start,
// updated_params, reduction (the last is blank on epoch rows).
void export_metrics(const MetricsRecord& metrics, const UpdateLedger& ledger, double reduction,
                    const std::string& path, const std::string& format);

// Ledger-only export (the `count` command): one row per (epoch, tag class),
// a total row per epoch, and summary rows for the cumulative count and the
// reduction fraction. CSV columns: epoch, tag_class, count.
void export_ledger(const UpdateLedger& ledger, double reduction, const std::string& path,
                   const std::string& format);

std::string metrics_to_string(const MetricsRecord& metrics, const UpdateLedger& ledger,
                              double reduction, const std::string& format);
std::string ledger_to_string(const UpdateLedger& ledger, double reduction,
                             const std::string& format);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace progtune
