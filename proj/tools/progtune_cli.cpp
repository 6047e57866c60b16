// Command-line front end. Talks to the library exclusively through the C API
// in progtune/progtune.h; exit codes are 0 (success), 1 (runtime failure),
// 2 (usage).

#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "progtune/progtune.h"

namespace {

struct StringGuard {
    char* ptr = nullptr;
    ~StringGuard() { pgt_string_free(ptr); }
};

int fail_with(pgt_status status) {
    std::fprintf(stderr, "error (%s): %s\n", pgt_status_name(status), pgt_last_error());
    return 1;
}

struct TrainFlags {
    std::string config_path;
    std::string mode, variant, peft, out_dir;
    int64_t seed = -1;
    int64_t repeats = 1;
};

pgt_status apply_overrides(pgt_config* config, const TrainFlags& flags) {
    pgt_status s = PGT_OK;
    if (!flags.mode.empty()) s = pgt_config_override(config, "schedule.mode", flags.mode.c_str());
    if (s == PGT_OK && !flags.variant.empty()) {
        s = pgt_config_override(config, "schedule.variant", flags.variant.c_str());
    }
    if (s == PGT_OK && !flags.peft.empty()) {
        s = pgt_config_override(config, "peft.kind", flags.peft.c_str());
    }
    if (s == PGT_OK && !flags.out_dir.empty()) {
        s = pgt_config_override(config, "output.dir", flags.out_dir.c_str());
    }
    if (s == PGT_OK && flags.seed >= 0) {
        s = pgt_config_override(config, "train.seed", std::to_string(flags.seed).c_str());
    }
    return s;
}

// Reads output.dir back out of the canonical config rendering.
std::string configured_out_dir(pgt_config* config) {
    StringGuard text;
    if (pgt_config_render(config, &text.ptr) != PGT_OK) return "runs/out";
    std::string rendered(text.ptr);
    const std::string key = "dir = ";
    const size_t at = rendered.rfind(key);
    if (at == std::string::npos) return "runs/out";
    const size_t end = rendered.find('\n', at);
    return rendered.substr(at + key.size(), end - at - key.size());
}

int cmd_train(const TrainFlags& flags) {
    pgt_config* config = nullptr;
    pgt_status s = pgt_config_load(flags.config_path.c_str(), &config);
    if (s != PGT_OK) return fail_with(s);
    s = apply_overrides(config, flags);
    if (s == PGT_OK) s = pgt_config_validate(config);
    if (s != PGT_OK) {
        pgt_config_free(config);
        return fail_with(s);
    }

    const std::string base_dir = configured_out_dir(config);
    int rc = 0;
    std::vector<std::vector<double>> eval_acc_runs;
    int64_t epochs = 0;

    for (int64_t r = 0; r < flags.repeats && rc == 0; ++r) {
        if (flags.repeats > 1) {
            // independent repetitions: derived seed, seed-suffixed output dir
            const int64_t seed = (flags.seed >= 0 ? flags.seed : 1) + r;
            s = pgt_config_override(config, "train.seed", std::to_string(seed).c_str());
            if (s == PGT_OK) {
                const std::string dir = base_dir + "/seed_" + std::to_string(seed);
                s = pgt_config_override(config, "output.dir", dir.c_str());
            }
            if (s != PGT_OK) {
                rc = fail_with(s);
                break;
            }
        }
        pgt_run* run = nullptr;
        s = pgt_train(config, &run);
        if (s != PGT_OK) {
            rc = fail_with(s);
            break;
        }
        StringGuard summary;
        pgt_run_summary(run, &summary.ptr);
        std::printf("%s", summary.ptr ? summary.ptr : "");
        StringGuard listing;
        s = pgt_run_write_artifacts(run, configured_out_dir(config).c_str(), &listing.ptr);
        if (s == PGT_OK && listing.ptr) std::printf("wrote:\n%s", listing.ptr);

        epochs = pgt_run_epochs(run);
        std::vector<double> acc;
        for (int64_t t = 1; t <= epochs; ++t) {
            double v = 0;
            if (pgt_run_metric(run, "eval_acc", t, &v) == PGT_OK) acc.push_back(v);
        }
        eval_acc_runs.push_back(std::move(acc));
        pgt_run_free(run);
        if (s != PGT_OK) rc = fail_with(s);
    }

    if (rc == 0 && flags.repeats > 1) {
        std::printf("average eval accuracy over %" PRId64 " seeds:", flags.repeats);
        for (int64_t t = 0; t < epochs; ++t) {
            double sum = 0;
            for (const auto& run : eval_acc_runs) sum += run[static_cast<size_t>(t)];
            std::printf(" %.4f", sum / static_cast<double>(eval_acc_runs.size()));
        }
        std::printf("\n");
    }
    pgt_config_free(config);
    return rc;
}

int cmd_simple(const std::string& kind, const TrainFlags& flags) {
    pgt_config* config = nullptr;
    pgt_status s = pgt_config_load(flags.config_path.c_str(), &config);
    if (s != PGT_OK) return fail_with(s);
    s = apply_overrides(config, flags);
    if (s == PGT_OK) s = pgt_config_validate(config);
    pgt_run* run = nullptr;
    if (s == PGT_OK) s = kind == "probe" ? pgt_probe(config, &run) : pgt_ablate(config, &run);
    int rc = 0;
    if (s != PGT_OK) {
        rc = fail_with(s);
    } else {
        StringGuard summary;
        pgt_run_summary(run, &summary.ptr);
        std::printf("%s", summary.ptr ? summary.ptr : "");
        StringGuard listing;
        s = pgt_run_write_artifacts(run, configured_out_dir(config).c_str(), &listing.ptr);
        if (s == PGT_OK && listing.ptr) {
            std::printf("wrote:\n%s", listing.ptr);
        } else if (s != PGT_OK) {
            rc = fail_with(s);
        }
    }
    pgt_run_free(run);
    pgt_config_free(config);
    return rc;
}

struct CountFlags {
    std::string arch = "bert-base";
    std::string head = "classifier";
    std::string mode = "ft";
    std::string variant = "standard";
    std::string peft = "full";
    std::string include_pooler = "auto";
    std::string targets = "wq,wv";
    std::string out_path, format = "csv";
    int64_t epochs = 3;
    int64_t classes = 2;
    int64_t blocks = 0, hidden = 0, heads = 0, ffn = 0, vocab = 0, max_pos = 0, type_vocab = 0;
    int64_t bottleneck = 64, rank = 8;
    double alpha = 16.0;
};

int cmd_count(const CountFlags& flags) {
    pgt_count_spec spec;
    pgt_count_spec_init(&spec);
    spec.arch = flags.arch.c_str();
    spec.head = flags.head.c_str();
    spec.mode = flags.mode.c_str();
    spec.variant = flags.variant.c_str();
    spec.peft = flags.peft.c_str();
    spec.epochs = flags.epochs;
    spec.num_classes = flags.classes;
    spec.blocks = flags.blocks;
    spec.hidden = flags.hidden;
    spec.heads = flags.heads;
    spec.ffn = flags.ffn;
    spec.vocab = flags.vocab;
    spec.max_positions = flags.max_pos;
    spec.type_vocab = flags.type_vocab;
    spec.adapter_bottleneck = flags.bottleneck;
    spec.lora_rank = flags.rank;
    spec.lora_alpha = flags.alpha;
    spec.lora_targets = flags.targets.c_str();
    if (flags.include_pooler == "auto") spec.include_pooler = -1;
    else if (flags.include_pooler == "on") spec.include_pooler = 1;
    else if (flags.include_pooler == "off") spec.include_pooler = 0;
    else {
        std::fprintf(stderr, "error: --include-pooler expects auto|on|off\n");
        return 2;
    }

    pgt_ledger* ledger = nullptr;
    pgt_status s = pgt_count(&spec, &ledger);
    if (s != PGT_OK) return fail_with(s);

    std::printf("architecture: %s, head %s, peft %s, mode %s\n", flags.arch.c_str(),
                flags.head.c_str(), flags.peft.c_str(), flags.mode.c_str());
    std::printf("total parameters:      %" PRId64 " (%.1fM)\n", pgt_ledger_total_params(ledger),
                static_cast<double>(pgt_ledger_total_params(ledger)) / 1e6);
    std::printf("trainable parameters:  %" PRId64 " (%.1fM)\n",
                pgt_ledger_trainable_params(ledger),
                static_cast<double>(pgt_ledger_trainable_params(ledger)) / 1e6);
    for (int64_t t = 1; t <= pgt_ledger_epochs(ledger); ++t) {
        std::printf("epoch %" PRId64 " updated:       %" PRId64 " (%.1fM)\n", t,
                    pgt_ledger_epoch_updated(ledger, t),
                    static_cast<double>(pgt_ledger_epoch_updated(ledger, t)) / 1e6);
    }
    std::printf("cumulative updated:    %" PRId64 " (%.1fM)\n", pgt_ledger_cumulative(ledger),
                static_cast<double>(pgt_ledger_cumulative(ledger)) / 1e6);
    std::printf("reduction vs full ft:  %.4f\n", pgt_ledger_reduction(ledger));

    int rc = 0;
    if (!flags.out_path.empty()) {
        s = pgt_ledger_export(ledger, flags.out_path.c_str(), flags.format.c_str());
        if (s != PGT_OK) rc = fail_with(s);
        else std::printf("wrote:\n%s\n", flags.out_path.c_str());
    }
    pgt_ledger_free(ledger);
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progressive fine-tuning experiments over a miniature Transformer encoder"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    TrainFlags train_flags;
    auto* train = app.add_subcommand("train", "run one schedule-driven training experiment");
    train->add_option("--config", train_flags.config_path, "run config file")->required();
    train->add_option("--mode", train_flags.mode, "ft|progtune");
    train->add_option("--variant", train_flags.variant, "standard|wolb|fromhb");
    train->add_option("--peft", train_flags.peft, "full|adapter|bitfit|lora");
    train->add_option("--seed", train_flags.seed, "override train.seed");
    train->add_option("--out", train_flags.out_dir, "override output.dir");
    train->add_option("--repeats", train_flags.repeats, "independent seeds to run and average")
        ->check(CLI::PositiveNumber);

    TrainFlags probe_flags;
    auto* probe = app.add_subcommand("probe", "per-block contribution probe (E + B_i + H)");
    probe->add_option("--config", probe_flags.config_path, "run config file")->required();
    probe->add_option("--seed", probe_flags.seed, "override train.seed");
    probe->add_option("--out", probe_flags.out_dir, "override output.dir");

    TrainFlags ablate_flags;
    auto* ablate =
        app.add_subcommand("ablate", "compare standard / wolb / fromhb on the same data");
    ablate->add_option("--config", ablate_flags.config_path, "run config file")->required();
    ablate->add_option("--peft", ablate_flags.peft, "full|adapter|bitfit|lora");
    ablate->add_option("--seed", ablate_flags.seed, "override train.seed");
    ablate->add_option("--out", ablate_flags.out_dir, "override output.dir");

    CountFlags count_flags;
    auto* count = app.add_subcommand("count", "static updated-parameter ledger (no training)");
    count->add_option("--arch", count_flags.arch, "bert-base|bert-large|custom");
    count->add_option("--epochs", count_flags.epochs, "epoch/stage count T");
    count->add_option("--mode", count_flags.mode, "ft|progtune");
    count->add_option("--variant", count_flags.variant, "standard|wolb|fromhb");
    count->add_option("--peft", count_flags.peft, "full|adapter|bitfit|lora");
    count->add_option("--head", count_flags.head, "classifier|qa");
    count->add_option("--classes", count_flags.classes, "classifier label count");
    count->add_option("--include-pooler", count_flags.include_pooler, "auto|on|off");
    count->add_option("--blocks", count_flags.blocks, "custom: transformer blocks");
    count->add_option("--hidden", count_flags.hidden, "custom: hidden size");
    count->add_option("--heads", count_flags.heads, "custom: attention heads");
    count->add_option("--ffn", count_flags.ffn, "custom: FFN inner size");
    count->add_option("--vocab", count_flags.vocab, "custom: vocabulary size");
    count->add_option("--max-pos", count_flags.max_pos, "custom: maximum positions");
    count->add_option("--type-vocab", count_flags.type_vocab, "custom: token-type vocabulary");
    count->add_option("--bottleneck", count_flags.bottleneck, "adapter bottleneck width");
    count->add_option("--rank", count_flags.rank, "lora rank");
    count->add_option("--alpha", count_flags.alpha, "lora alpha");
    count->add_option("--targets", count_flags.targets, "lora targets, e.g. wq,wv");
    count->add_option("--out", count_flags.out_path, "export ledger to this file");
    count->add_option("--format", count_flags.format, "csv|jsonl");

    std::string export_run_path, export_out, export_format = "csv";
    auto* exp = app.add_subcommand("export", "re-render a saved run.json");
    exp->add_option("--run", export_run_path, "path to run.json")->required();
    exp->add_option("--out", export_out, "output file")->required();
    exp->add_option("--format", export_format, "csv|jsonl");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (train->parsed()) return cmd_train(train_flags);
    if (probe->parsed()) return cmd_simple("probe", probe_flags);
    if (ablate->parsed()) return cmd_simple("ablate", ablate_flags);
    if (count->parsed()) return cmd_count(count_flags);
    if (exp->parsed()) {
        StringGuard listing;
        pgt_status s =
            pgt_export_run(export_run_path.c_str(), export_out.c_str(), export_format.c_str(),
                           &listing.ptr);
        if (s != PGT_OK) return fail_with(s);
        std::printf("wrote:\n%s", listing.ptr ? listing.ptr : "");
        return 0;
    }
    return 2;
}
