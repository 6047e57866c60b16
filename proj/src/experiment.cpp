#include "experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

namespace progtune {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

StageSchedule schedule_for(const RunConfig& config, ScheduleVariant variant, RunMode mode) {
    const auto plan = partition_blocks(config.model.num_blocks, config.effective_stages());
    StageSchedule s = mode == RunMode::finetune ? finetune_stages(plan)
                                                : build_stages(plan, variant);
    s.embeddings_always = config.train.embeddings_always;
    return s;
}

nlohmann::ordered_json ledger_json(const UpdateLedger& ledger, double reduction) {
    nlohmann::ordered_json j;
    j["per_epoch"] = ledger.per_epoch;
    j["cumulative"] = ledger.cumulative;
    j["reduction"] = reduction;
    nlohmann::ordered_json breakdown = nlohmann::ordered_json::array();
    for (const auto& rows : ledger.breakdown) {
        nlohmann::ordered_json classes;
        for (const auto& [cls, n] : rows) classes[cls] = n;
        breakdown.push_back(classes);
    }
    j["breakdown"] = breakdown;
    return j;
}

UpdateLedger ledger_from_json(const nlohmann::ordered_json& j) {
    UpdateLedger ledger;
    ledger.per_epoch = j.at("per_epoch").get<std::vector<int64_t>>();
    ledger.cumulative = j.at("cumulative").get<int64_t>();
    for (const auto& classes : j.at("breakdown")) {
        std::vector<std::pair<std::string, int64_t>> rows;
        for (auto it = classes.begin(); it != classes.end(); ++it) {
            rows.emplace_back(it.key(), it.value().get<int64_t>());
        }
        ledger.breakdown.push_back(std::move(rows));
    }
    return ledger;
}

nlohmann::ordered_json metrics_json(const MetricsRecord& m) {
    nlohmann::ordered_json j;
    j["loss_mean"] = m.loss_mean;
    j["train_accuracy"] = m.train_accuracy;
    j["eval_accuracy"] = m.eval_accuracy;
    j["lr_start"] = m.lr_start;
    j["lr_trace"] = m.lr_trace;
    return j;
}

MetricsRecord metrics_from_json(const nlohmann::ordered_json& j) {
    MetricsRecord m;
    m.loss_mean = j.at("loss_mean").get<std::vector<double>>();
    m.train_accuracy = j.at("train_accuracy").get<std::vector<double>>();
    m.eval_accuracy = j.at("eval_accuracy").get<std::vector<double>>();
    m.lr_start = j.at("lr_start").get<std::vector<double>>();
    m.lr_trace = j.at("lr_trace").get<std::vector<double>>();
    return m;
}

void build_document(RunOutcome& outcome) {
    nlohmann::ordered_json doc;
    doc["schema"] = "progtune-run/1";
    doc["kind"] = outcome.kind;
    doc["config"] = serialize_run_config(outcome.config);
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (size_t i = 0; i < outcome.results.size(); ++i) {
        nlohmann::ordered_json r;
        r["name"] = outcome.run_names[i];
        r["metrics"] = metrics_json(outcome.results[i].metrics);
        r["ledger"] = ledger_json(outcome.results[i].ledger, outcome.reductions[i]);
        runs.push_back(std::move(r));
    }
    doc["runs"] = std::move(runs);
    if (outcome.kind == "probe") doc["probe_accuracy"] = outcome.probe_accuracy;
    outcome.document = std::move(doc);
}

std::string ablate_comparison_csv(const RunOutcome& outcome) {
    std::ostringstream out;
    out << "variant,final_eval_acc,final_train_acc,cumulative_updated_params,reduction\n";
    for (size_t i = 0; i < outcome.results.size(); ++i) {
        const auto& m = outcome.results[i].metrics;
        out << outcome.run_names[i] << "," << fmt(m.eval_accuracy.back()) << ","
            << fmt(m.train_accuracy.back()) << "," << outcome.results[i].ledger.cumulative << ","
            << fmt(outcome.reductions[i]) << "\n";
    }
    return out.str();
}

std::string probe_csv(const RunOutcome& outcome) {
    std::ostringstream out;
    out << "block,eval_acc\n";
    for (size_t i = 0; i < outcome.probe_accuracy.size(); ++i) {
        out << (i + 1) << "," << fmt(outcome.probe_accuracy[i]) << "\n";
    }
    return out.str();
}

}  // namespace

CountOutcome static_count(const CountRequest& request) {
    CountOutcome outcome;
    StaticArch arch;
    if (request.arch == "custom") {
        if (!request.dims_given) {
            fail(Errc::config, "count: arch 'custom' needs explicit dimensions");
        }
        arch = request.dims;
    } else {
        arch = named_arch(request.arch);
    }
    arch.head_kind = request.head_kind;
    arch.include_pooler = request.include_pooler;
    arch.num_classes = request.num_classes;

    const ParamTable table = static_param_count(arch, request.peft);
    if (request.epochs < 1 || request.epochs > arch.num_blocks) {
        fail(Errc::config, "count: epochs must lie in [1, " + std::to_string(arch.num_blocks) + "]");
    }
    const auto plan = partition_blocks(arch.num_blocks, request.epochs);
    const StageSchedule schedule = request.mode == RunMode::finetune
                                       ? finetune_stages(plan)
                                       : build_stages(plan, request.variant);

    outcome.arch = arch;
    outcome.ledger = count_updated_params(schedule, table, request.peft);
    outcome.reduction = predicted_reduction(schedule, table, request.peft);
    outcome.total_params = table.total_elements();
    const PeftGroups groups = peft_trainable_set(table, request.peft);
    int64_t trainable = 0;
    for (const auto& group : groups.per_block) {
        for (size_t idx : group) trainable += table.params[idx].elements;
    }
    for (size_t idx : groups.head_part) trainable += table.params[idx].elements;
    for (size_t idx : groups.embedding_part) trainable += table.params[idx].elements;
    outcome.trainable_params = trainable;
    return outcome;
}

Model prepare_model(const RunConfig& config) {
    config.validate();
    Model model = build_model(config.model, config.train.seed);
    const PeftConfig& peft = config.train.peft;
    switch (peft.kind) {
    case PeftKind::full: break;
    case PeftKind::adapter: apply_adapter(model, peft.adapter_bottleneck); break;
    case PeftKind::bitfit: apply_bitfit(model); break;
    case PeftKind::lora:
        apply_lora(model, peft.lora_rank, peft.lora_alpha, peft.lora_targets);
        break;
    }
    return model;
}

StageSchedule make_schedule(const RunConfig& config) {
    return schedule_for(config, config.train.variant, config.train.mode);
}

RunOutcome run_train(const RunConfig& config) {
    config.validate();
    RunOutcome outcome;
    outcome.kind = "train";
    outcome.config = config;

    const TaskData task = generate_task(config.task);
    Model model = prepare_model(config);
    const StageSchedule schedule = make_schedule(config);
    outcome.run_names.push_back(config.train.mode == RunMode::finetune
                                    ? "ft"
                                    : variant_name(config.train.variant));
    outcome.results.push_back(train_run(model, schedule, task, config.train));
    outcome.reductions.push_back(
        predicted_reduction(schedule, model.table(), config.train.peft));
    outcome.checkpoint_bytes = serialize_checkpoint(model);
    build_document(outcome);
    return outcome;
}

RunOutcome run_probe(const RunConfig& config) {
    config.validate();
    RunOutcome outcome;
    outcome.kind = "probe";
    outcome.config = config;

    const TaskData task = generate_task(config.task);
    for (int64_t i = 1; i <= config.model.num_blocks; ++i) {
        Model model = build_model(config.model, config.train.seed);
        TrainResult result = block_probe_run(model, task, i, config.train);
        outcome.probe_accuracy.push_back(result.metrics.eval_accuracy.back());
        outcome.run_names.push_back("block_" + std::to_string(i));
        outcome.reductions.push_back(0.0);
        outcome.results.push_back(std::move(result));
    }
    build_document(outcome);
    return outcome;
}

RunOutcome run_ablate(const RunConfig& config) {
    config.validate();
    RunOutcome outcome;
    outcome.kind = "ablate";
    outcome.config = config;

    const TaskData task = generate_task(config.task);
    for (ScheduleVariant variant : {ScheduleVariant::standard, ScheduleVariant::without_low_blocks,
                                    ScheduleVariant::from_high_blocks}) {
        RunConfig variant_config = config;
        variant_config.train.mode = RunMode::progtune;
        variant_config.train.variant = variant;
        Model model = prepare_model(variant_config);
        const StageSchedule schedule = make_schedule(variant_config);
        outcome.run_names.push_back(variant_name(variant));
        outcome.reductions.push_back(
            predicted_reduction(schedule, model.table(), variant_config.train.peft));
        outcome.results.push_back(train_run(model, schedule, task, variant_config.train));
    }
    build_document(outcome);
    return outcome;
}

std::string outcome_summary(const RunOutcome& outcome) {
    std::ostringstream out;
    if (outcome.kind == "probe") {
        out << "block probe (eval accuracy per trained block)\n";
        for (size_t i = 0; i < outcome.probe_accuracy.size(); ++i) {
            out << "  block " << (i + 1) << ": " << fmt(outcome.probe_accuracy[i]) << "\n";
        }
        return out.str();
    }
    if (outcome.kind == "ablate") {
        out << ablate_comparison_csv(outcome);
        return out.str();
    }
    const auto& r = outcome.results.front();
    out << "run " << outcome.run_names.front() << ": " << r.metrics.loss_mean.size()
        << " epochs\n";
    for (size_t t = 0; t < r.metrics.loss_mean.size(); ++t) {
        out << "  epoch " << (t + 1) << ": loss " << fmt(r.metrics.loss_mean[t]) << ", train_acc "
            << fmt(r.metrics.train_accuracy[t]) << ", eval_acc "
            << fmt(r.metrics.eval_accuracy[t]) << ", updated " << r.ledger.per_epoch[t] << "\n";
    }
    out << "cumulative updated params: " << r.ledger.cumulative
        << " (reduction " << fmt(outcome.reductions.front()) << ")\n";
    return out.str();
}

std::vector<std::string> write_artifacts(const RunOutcome& outcome, const std::string& dir) {
    std::vector<std::string> written;
    const std::filesystem::path base(dir);
    std::error_code ec;
    std::filesystem::create_directories(base, ec);
    if (ec) fail(Errc::io, "cannot create output directory '" + dir + "'");

    const std::string run_json = (base / "run.json").string();
    write_text_file(run_json, outcome.document.dump(2) + "\n");
    written.push_back(run_json);

    const std::string& format = outcome.config.output_format;
    const std::string ext = format == "csv" ? ".csv" : ".jsonl";
    if (outcome.results.size() == 1) {
        const std::string path = (base / ("metrics" + ext)).string();
        export_metrics(outcome.results[0].metrics, outcome.results[0].ledger,
                       outcome.reductions[0], path, format);
        written.push_back(path);
    } else {
        for (size_t i = 0; i < outcome.results.size(); ++i) {
            const std::string path =
                (base / ("metrics_" + outcome.run_names[i] + ext)).string();
            export_metrics(outcome.results[i].metrics, outcome.results[i].ledger,
                           outcome.reductions[i], path, format);
            written.push_back(path);
        }
    }

    if (outcome.kind == "ablate") {
        const std::string path = (base / "ablate_comparison.csv").string();
        write_text_file(path, ablate_comparison_csv(outcome));
        written.push_back(path);
    }
    if (outcome.kind == "probe") {
        const std::string path = (base / "probe.csv").string();
        write_text_file(path, probe_csv(outcome));
        written.push_back(path);
    }
    if (!outcome.checkpoint_bytes.empty()) {
        const std::string path = (base / "checkpoint.pgtn").string();
        std::string blob(outcome.checkpoint_bytes.begin(), outcome.checkpoint_bytes.end());
        write_text_file(path, blob);
        written.push_back(path);
    }
    return written;
}

std::vector<std::string> export_run(const std::string& run_json_path, const std::string& out_path,
                                    const std::string& format) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(read_text_file(run_json_path));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format, "'" + run_json_path + "' is not valid JSON: " + e.what());
    }
    if (!doc.contains("schema") || doc["schema"] != "progtune-run/1") {
        fail(Errc::format, "'" + run_json_path + "' is not a progtune run document");
    }

    std::vector<std::string> written;
    const auto& runs = doc.at("runs");
    const std::filesystem::path out(out_path);
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        const MetricsRecord metrics = metrics_from_json(run.at("metrics"));
        const UpdateLedger ledger = ledger_from_json(run.at("ledger"));
        const double reduction = run.at("ledger").at("reduction").get<double>();
        std::filesystem::path target = out;
        if (runs.size() > 1) {
            target = out.parent_path() /
                     (out.stem().string() + "_" + run.at("name").get<std::string>() +
                      out.extension().string());
        }
        export_metrics(metrics, ledger, reduction, target.string(), format);
        written.push_back(target.string());
    }
    return written;
}

}  // namespace progtune
