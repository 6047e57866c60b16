#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "checkpoint.hpp"
#include "experiment.hpp"
#include "metrics_io.hpp"
#include "run_config.hpp"

using namespace progtune;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "progtune_io_test";
    std::filesystem::create_directories(dir);
    return dir;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.num_blocks = 2;
    c.hidden = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.vocab = 11;
    c.max_positions = 16;
    return c;
}

std::string micro_run_ini(const std::string& out_dir) {
    return "[model]\nblocks = 2\nhidden = 8\nheads = 2\nffn = 16\nvocab = 12\n"
           "max_positions = 16\nclasses = 2\nhead = classifier\n"
           "[task]\nkind = keyword_detect\nvocab_size = 12\nseq_len = 6\nclasses = 2\n"
           "train_n = 32\neval_n = 8\nseed = 5\n"
           "[train]\nepochs = 2\nbatch_size = 8\nbase_lr = 0.01\nseed = 5\n"
           "[schedule]\nmode = progtune\nvariant = standard\n"
           "[output]\ndir = " + out_dir + "\nformat = csv\n";
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    const auto path = (temp_dir() / "roundtrip.pgtn").string();
    Model m = build_model(tiny_config(), 61);
    apply_lora(m, 2, 4.0, {"wq", "wv"});
    save_checkpoint(m, path);

    Model loaded = build_model(tiny_config(), 999);  // different weights
    apply_lora(loaded, 2, 4.0, {"wq", "wv"});
    load_checkpoint(path, loaded);

    const auto& a = m.registry.entries();
    const auto& b = loaded.registry.entries();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].tensor->data == b[i].tensor->data);
    }
}

TEST_CASE("checkpoint file size matches the format arithmetic") {
    const auto path = (temp_dir() / "size.pgtn").string();
    Model m = build_model(tiny_config(), 62);
    save_checkpoint(m, path);

    // magic + version + count, then per tensor: name_len + tag + rank (12
    // bytes) + name + 8*rank + 8*elements
    uintmax_t expect = 4 + 4 + 4;
    for (const auto& e : m.registry.entries()) {
        expect += 12 + e.id.size() + 8 * e.tensor->shape.size() +
                  8 * static_cast<uintmax_t>(e.tensor->size());
    }
    CHECK(std::filesystem::file_size(path) == expect);
}

TEST_CASE("corrupt or truncated checkpoints never partially load") {
    const auto dir = temp_dir();
    Model m = build_model(tiny_config(), 63);
    const auto good = (dir / "good.pgtn").string();
    save_checkpoint(m, good);

    SUBCASE("bad magic is a format error and leaves the model untouched") {
        auto bytes = serialize_checkpoint(m);
        bytes[0] = 'X';
        const auto bad = (dir / "bad_magic.pgtn").string();
        std::ofstream(bad, std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));

        Model target = build_model(tiny_config(), 64);
        const auto before = target.tok_embed->data;
        try {
            load_checkpoint(bad, target);
            FAIL("expected a format error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::format);
        }
        CHECK(target.tok_embed->data == before);
    }

    SUBCASE("truncation is an io error") {
        auto bytes = serialize_checkpoint(m);
        bytes.resize(bytes.size() / 2);
        const auto cut = (dir / "truncated.pgtn").string();
        std::ofstream(cut, std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));
        Model target = build_model(tiny_config(), 64);
        try {
            load_checkpoint(cut, target);
            FAIL("expected an io error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::io);
        }
    }

    SUBCASE("structure mismatch is a format error") {
        ModelConfig other = tiny_config();
        other.num_blocks = 3;
        Model target = build_model(other, 65);
        CHECK_THROWS_AS(load_checkpoint(good, target), Error);
    }
}

TEST_CASE("tag codes round-trip") {
    for (const ParameterTag& tag :
         {ParameterTag{TagKind::embedding, 0, ""}, ParameterTag{TagKind::block, 7, ""},
          ParameterTag{TagKind::head, 0, ""}, ParameterTag{TagKind::adapter, 12, ""},
          ParameterTag{TagKind::lora, 3, "wv"}, ParameterTag{TagKind::bias, 24, ""}}) {
        CHECK(decode_tag(encode_tag(tag)) == tag);
    }
}

TEST_CASE("run config parse -> serialize -> parse is the identity") {
    const std::string text = micro_run_ini("runs/x");
    const RunConfig once = parse_run_config(text);
    const std::string canon = serialize_run_config(once);
    const RunConfig twice = parse_run_config(canon);
    CHECK(serialize_run_config(twice) == canon);
    CHECK(twice.model.num_blocks == 2);
    CHECK(twice.task.kind == TaskKind::keyword_detect);
    CHECK(twice.train.epochs == 2);
    CHECK(twice.output_dir == "runs/x");
}

TEST_CASE("run config validation catches hand-edited inconsistencies") {
    SUBCASE("stages != epochs") {
        RunConfig c = parse_run_config(micro_run_ini("runs/x"));
        c.stages = 3;  // train.epochs is 2
        CHECK_THROWS_AS(c.validate(), Error);
    }
    SUBCASE("vocab mismatch") {
        RunConfig c = parse_run_config(micro_run_ini("runs/x"));
        c.model.vocab = 99;
        CHECK_THROWS_AS(c.validate(), Error);
    }
    SUBCASE("more stages than blocks") {
        RunConfig c = parse_run_config(micro_run_ini("runs/x"));
        c.train.epochs = 5;
        CHECK_THROWS_AS(c.validate(), Error);
    }
    SUBCASE("unknown keys and sections are rejected at parse time") {
        CHECK_THROWS_AS(parse_run_config("[model]\nblocks = 2\nbogus = 1\n"), Error);
        CHECK_THROWS_AS(parse_run_config("[nonsense]\na = 1\n"), Error);
        CHECK_THROWS_AS(parse_run_config("loose = 1\n"), Error);
    }
    SUBCASE("overrides reuse the same key space") {
        RunConfig c = parse_run_config(micro_run_ini("runs/x"));
        override_run_config(c, "schedule.variant", "wolb");
        CHECK(c.train.variant == ScheduleVariant::without_low_blocks);
        CHECK_THROWS_AS(override_run_config(c, "schedule.nope", "1"), Error);
        CHECK_THROWS_AS(override_run_config(c, "noseparator", "1"), Error);
    }
}

TEST_CASE("metrics export layout") {
    MetricsRecord m;
    m.loss_mean = {0.9, 0.5, 0.2};
    m.train_accuracy = {0.6, 0.8, 1.0};
    m.eval_accuracy = {0.5, 0.7, 0.9};
    m.lr_start = {0.02, 0.013, 0.006};
    UpdateLedger ledger;
    ledger.per_epoch = {100, 70, 40};
    ledger.cumulative = 210;
    ledger.breakdown = {{{"embedding", 20}, {"block", 60}, {"head", 20}},
                        {{"embedding", 20}, {"block", 30}, {"head", 20}},
                        {{"embedding", 20}, {"head", 20}}};

    SUBCASE("csv: one row per epoch plus a summary row") {
        const std::string csv = metrics_to_string(m, ledger, 0.25, "csv");
        int lines = 0;
        for (char ch : csv) lines += ch == '\n';
        CHECK(lines == 1 + 3 + 1);  // header + epochs + summary
        CHECK(csv.rfind("summary,,,,,210,0.250000\n") != std::string::npos);
        CHECK(csv.substr(0, csv.find('\n')) ==
              "epoch,loss,train_acc,eval_acc,lr_start,updated_params,reduction");
    }
    SUBCASE("jsonl rows carry the same numbers") {
        const std::string jsonl = metrics_to_string(m, ledger, 0.25, "jsonl");
        CHECK(jsonl.find("\"updated_params\":100") != std::string::npos);
        CHECK(jsonl.find("\"cumulative_updated_params\":210") != std::string::npos);
    }
    SUBCASE("mismatched epoch counts are a contract error") {
        UpdateLedger bad = ledger;
        bad.per_epoch.pop_back();
        CHECK_THROWS_AS(metrics_to_string(m, bad, 0.25, "csv"), Error);
    }
    SUBCASE("unknown format is a config error") {
        CHECK_THROWS_AS(metrics_to_string(m, ledger, 0.25, "xml"), Error);
    }
}

TEST_CASE("ledger export carries the ~25% reduction for bert-base T=3") {
    CountRequest request;
    request.arch = "bert-base";
    request.mode = RunMode::progtune;
    request.epochs = 3;
    const CountOutcome outcome = static_count(request);
    const std::string csv = ledger_to_string(outcome.ledger, outcome.reduction, "csv");
    CHECK(csv.find("summary,cumulative,") != std::string::npos);
    const size_t at = csv.find("summary,reduction,");
    REQUIRE(at != std::string::npos);
    const double r = std::stod(csv.substr(at + 18));
    CHECK(r > 0.22);
    CHECK(r < 0.28);
}

TEST_CASE("train artifacts are deterministic and re-exportable") {
    const auto dir1 = (temp_dir() / "run_a").string();
    const auto dir2 = (temp_dir() / "run_b").string();
    const RunConfig config = parse_run_config(micro_run_ini(dir1));

    const RunOutcome a = run_train(config);
    write_artifacts(a, dir1);
    RunConfig config2 = config;
    config2.output_dir = dir2;
    const RunOutcome b = run_train(config2);
    write_artifacts(b, dir2);

    CHECK(read_text_file(dir1 + "/metrics.csv") == read_text_file(dir2 + "/metrics.csv"));
    CHECK(read_text_file(dir1 + "/run.json") == read_text_file(dir2 + "/run.json"));
    CHECK(read_text_file(dir1 + "/checkpoint.pgtn") == read_text_file(dir2 + "/checkpoint.pgtn"));

    SUBCASE("export_run re-renders the same csv") {
        const auto re = (temp_dir() / "re.csv").string();
        export_run(dir1 + "/run.json", re, "csv");
        CHECK(read_text_file(re) == read_text_file(dir1 + "/metrics.csv"));
    }
    SUBCASE("export_run rejects non-run json") {
        const auto bogus = (temp_dir() / "bogus.json").string();
        write_text_file(bogus, "{\"schema\": \"something-else\"}");
        CHECK_THROWS_AS(export_run(bogus, (temp_dir() / "out.csv").string(), "csv"), Error);
    }
}

TEST_CASE("count request validation") {
    CountRequest request;
    request.arch = "custom";  // no dims supplied
    CHECK_THROWS_AS(static_count(request), Error);

    request.arch = "bert-base";
    request.epochs = 13;  // more stages than blocks
    CHECK_THROWS_AS(static_count(request), Error);
}
