#include "metrics_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace progtune {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

void check_format(const std::string& format) {
    if (format != "csv" && format != "jsonl") {
        fail(Errc::config, "export format must be csv or jsonl, got '" + format + "'");
    }
}

}  // namespace

std::string metrics_to_string(const MetricsRecord& metrics, const UpdateLedger& ledger,
                              double reduction, const std::string& format) {
    check_format(format);
    const size_t epochs = ledger.per_epoch.size();
    if (metrics.loss_mean.size() != epochs) {
        fail(Errc::contract, "metrics and ledger disagree on epoch count");
    }
    std::ostringstream out;
    if (format == "csv") {
        out << "epoch,loss,train_acc,eval_acc,lr_start,updated_params,reduction\n";
        for (size_t t = 0; t < epochs; ++t) {
            out << (t + 1) << "," << fmt(metrics.loss_mean[t]) << ","
                << fmt(metrics.train_accuracy[t]) << "," << fmt(metrics.eval_accuracy[t]) << ","
                << fmt(metrics.lr_start[t], "%.8g") << "," << ledger.per_epoch[t] << ",\n";
        }
        out << "summary,,,,," << ledger.cumulative << "," << fmt(reduction) << "\n";
    } else {
        for (size_t t = 0; t < epochs; ++t) {
            nlohmann::ordered_json row;
            row["epoch"] = t + 1;
            row["loss"] = metrics.loss_mean[t];
            row["train_acc"] = metrics.train_accuracy[t];
            row["eval_acc"] = metrics.eval_accuracy[t];
            row["lr_start"] = metrics.lr_start[t];
            row["updated_params"] = ledger.per_epoch[t];
            out << row.dump() << "\n";
        }
        nlohmann::ordered_json summary;
        summary["summary"] = true;
        summary["cumulative_updated_params"] = ledger.cumulative;
        summary["reduction"] = reduction;
        out << summary.dump() << "\n";
    }
    return out.str();
}

std::string ledger_to_string(const UpdateLedger& ledger, double reduction,
                             const std::string& format) {
    check_format(format);
    std::ostringstream out;
    if (format == "csv") {
        out << "epoch,tag_class,count\n";
        for (size_t t = 0; t < ledger.per_epoch.size(); ++t) {
            for (const auto& [cls, n] : ledger.breakdown[t]) {
                out << (t + 1) << "," << cls << "," << n << "\n";
            }
            out << (t + 1) << ",total," << ledger.per_epoch[t] << "\n";
        }
        out << "summary,cumulative," << ledger.cumulative << "\n";
        out << "summary,reduction," << fmt(reduction) << "\n";
    } else {
        for (size_t t = 0; t < ledger.per_epoch.size(); ++t) {
            nlohmann::ordered_json row;
            row["epoch"] = t + 1;
            row["total"] = ledger.per_epoch[t];
            nlohmann::ordered_json classes;
            for (const auto& [cls, n] : ledger.breakdown[t]) classes[cls] = n;
            row["by_class"] = classes;
            out << row.dump() << "\n";
        }
        nlohmann::ordered_json summary;
        summary["summary"] = true;
        summary["cumulative_updated_params"] = ledger.cumulative;
        summary["reduction"] = reduction;
        out << summary.dump() << "\n";
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        if (ec) fail(Errc::io, "cannot create directory '" + parent.string() + "'");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) fail(Errc::io, "short write to '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void export_metrics(const MetricsRecord& metrics, const UpdateLedger& ledger, double reduction,
                    const std::string& path, const std::string& format) {
    write_text_file(path, metrics_to_string(metrics, ledger, reduction, format));
}

void export_ledger(const UpdateLedger& ledger, double reduction, const std::string& path,
                   const std::string& format) {
    write_text_file(path, ledger_to_string(ledger, reduction, format));
}

}  // namespace progtune
