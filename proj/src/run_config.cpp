#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace progtune {

namespace {

std::string trim(const std::string& s) {
    size_t lo = s.find_first_not_of(" \t\r");
    if (lo == std::string::npos) return "";
    size_t hi = s.find_last_not_of(" \t\r");
    return s.substr(lo, hi - lo + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        fail(Errc::config, "config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

uint64_t to_uint(const std::string& key, const std::string& v) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        fail(Errc::config, "config: '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        fail(Errc::config, "config: '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(Errc::config, "config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void assign(RunConfig& c, const std::string& section, const std::string& key,
            const std::string& value) {
    const std::string full = section + "." + key;
    if (section == "model") {
        if (key == "blocks") c.model.num_blocks = to_int(full, value);
        else if (key == "hidden") c.model.hidden = to_int(full, value);
        else if (key == "heads") c.model.num_heads = to_int(full, value);
        else if (key == "ffn") c.model.ffn_dim = to_int(full, value);
        else if (key == "vocab") c.model.vocab = to_int(full, value);
        else if (key == "max_positions") c.model.max_positions = to_int(full, value);
        else if (key == "classes") c.model.num_classes = to_int(full, value);
        else if (key == "head") c.model.head_kind = head_kind_from_name(value);
        else fail(Errc::config, "config: unknown key '" + full + "'");
    } else if (section == "task") {
        if (key == "kind") c.task.kind = task_kind_from_name(value);
        else if (key == "vocab_size") c.task.vocab_size = to_int(full, value);
        else if (key == "seq_len") c.task.seq_len = to_int(full, value);
        else if (key == "classes") c.task.num_classes = to_int(full, value);
        else if (key == "train_n") c.task.train_n = to_int(full, value);
        else if (key == "eval_n") c.task.eval_n = to_int(full, value);
        else if (key == "seed") c.task.seed = to_uint(full, value);
        else fail(Errc::config, "config: unknown key '" + full + "'");
    } else if (section == "train") {
        if (key == "epochs") c.train.epochs = to_int(full, value);
        else if (key == "batch_size") c.train.batch_size = to_int(full, value);
        else if (key == "base_lr") c.train.base_lr = to_double(full, value);
        else if (key == "seed") c.train.seed = to_uint(full, value);
        else if (key == "optimizer") c.train.optimizer.kind = optimizer_kind_from_name(value);
        else if (key == "beta1") c.train.optimizer.beta1 = to_double(full, value);
        else if (key == "beta2") c.train.optimizer.beta2 = to_double(full, value);
        else if (key == "eps") c.train.optimizer.eps = to_double(full, value);
        else if (key == "weight_decay") c.train.optimizer.weight_decay = to_double(full, value);
        else if (key == "momentum") c.train.optimizer.momentum = to_double(full, value);
        else fail(Errc::config, "config: unknown key '" + full + "'");
    } else if (section == "schedule") {
        if (key == "mode") c.train.mode = run_mode_from_name(value);
        else if (key == "variant") c.train.variant = variant_from_name(value);
        else if (key == "stages") c.stages = to_int(full, value);
        else if (key == "embeddings_always") c.train.embeddings_always = to_bool(full, value);
        else fail(Errc::config, "config: unknown key '" + full + "'");
    } else if (section == "peft") {
        if (key == "kind") c.train.peft.kind = peft_kind_from_name(value);
        else if (key == "bottleneck") c.train.peft.adapter_bottleneck = to_int(full, value);
        else if (key == "rank") c.train.peft.lora_rank = to_int(full, value);
        else if (key == "alpha") c.train.peft.lora_alpha = to_double(full, value);
        else if (key == "targets") c.train.peft.lora_targets = split_list(value);
        else fail(Errc::config, "config: unknown key '" + full + "'");
    } else if (section == "output") {
        if (key == "dir") c.output_dir = value;
        else if (key == "format") {
            if (value != "csv" && value != "jsonl") {
                fail(Errc::config, "config: output.format must be csv or jsonl");
            }
            c.output_format = value;
        } else {
            fail(Errc::config, "config: unknown key '" + full + "'");
        }
    } else {
        fail(Errc::config, "config: unknown section '" + section + "'");
    }
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    task.validate();
    train.validate();
    if (model.vocab != task.vocab_size) {
        fail(Errc::config, "config: model.vocab (" + std::to_string(model.vocab) +
                               ") must equal task.vocab_size (" + std::to_string(task.vocab_size) +
                               ")");
    }
    if (model.head_kind == HeadKind::classifier && model.num_classes != task.num_classes) {
        fail(Errc::config, "config: model.classes must equal task.classes");
    }
    if (task.seq_len > model.max_positions) {
        fail(Errc::config, "config: task.seq_len exceeds model.max_positions");
    }
    if (stages > 0 && stages != train.epochs) {
        fail(Errc::config, "config: schedule.stages (" + std::to_string(stages) +
                               ") must equal train.epochs (" + std::to_string(train.epochs) +
                               "); stages are bound one-to-one to epochs");
    }
    if (effective_stages() > model.num_blocks) {
        fail(Errc::config, "config: " + std::to_string(effective_stages()) +
                               " stages cannot partition " + std::to_string(model.num_blocks) +
                               " blocks");
    }
    if (train.peft.kind == PeftKind::adapter && train.peft.adapter_bottleneck >= model.hidden) {
        fail(Errc::config, "config: peft.bottleneck must be < model.hidden");
    }
    if (train.peft.kind == PeftKind::lora && train.peft.lora_rank >= model.hidden) {
        fail(Errc::config, "config: peft.rank must be < model.hidden");
    }
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                fail(Errc::config, "config line " + std::to_string(lineno) + ": unterminated section");
            }
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            fail(Errc::config, "config line " + std::to_string(lineno) + ": expected key = value");
        }
        if (section.empty()) {
            fail(Errc::config, "config line " + std::to_string(lineno) + ": key outside any section");
        }
        assign(c, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream out;
    out << "[model]\n";
    out << "blocks = " << c.model.num_blocks << "\n";
    out << "hidden = " << c.model.hidden << "\n";
    out << "heads = " << c.model.num_heads << "\n";
    out << "ffn = " << c.model.ffn_dim << "\n";
    out << "vocab = " << c.model.vocab << "\n";
    out << "max_positions = " << c.model.max_positions << "\n";
    out << "classes = " << c.model.num_classes << "\n";
    out << "head = " << head_kind_name(c.model.head_kind) << "\n";
    out << "\n[task]\n";
    out << "kind = " << task_kind_name(c.task.kind) << "\n";
    out << "vocab_size = " << c.task.vocab_size << "\n";
    out << "seq_len = " << c.task.seq_len << "\n";
    out << "classes = " << c.task.num_classes << "\n";
    out << "train_n = " << c.task.train_n << "\n";
    out << "eval_n = " << c.task.eval_n << "\n";
    out << "seed = " << c.task.seed << "\n";
    out << "\n[train]\n";
    out << "epochs = " << c.train.epochs << "\n";
    out << "batch_size = " << c.train.batch_size << "\n";
    out << "base_lr = " << fmt_double(c.train.base_lr) << "\n";
    out << "seed = " << c.train.seed << "\n";
    out << "optimizer = " << optimizer_kind_name(c.train.optimizer.kind) << "\n";
    out << "beta1 = " << fmt_double(c.train.optimizer.beta1) << "\n";
    out << "beta2 = " << fmt_double(c.train.optimizer.beta2) << "\n";
    out << "eps = " << fmt_double(c.train.optimizer.eps) << "\n";
    out << "weight_decay = " << fmt_double(c.train.optimizer.weight_decay) << "\n";
    out << "momentum = " << fmt_double(c.train.optimizer.momentum) << "\n";
    out << "\n[schedule]\n";
    out << "mode = " << run_mode_name(c.train.mode) << "\n";
    out << "variant = " << variant_name(c.train.variant) << "\n";
    out << "stages = " << c.effective_stages() << "\n";
    out << "embeddings_always = " << (c.train.embeddings_always ? "true" : "false") << "\n";
    out << "\n[peft]\n";
    out << "kind = " << peft_kind_name(c.train.peft.kind) << "\n";
    out << "bottleneck = " << c.train.peft.adapter_bottleneck << "\n";
    out << "rank = " << c.train.peft.lora_rank << "\n";
    out << "alpha = " << fmt_double(c.train.peft.lora_alpha) << "\n";
    out << "targets = ";
    for (size_t i = 0; i < c.train.peft.lora_targets.size(); ++i) {
        if (i) out << ",";
        out << c.train.peft.lora_targets[i];
    }
    out << "\n";
    out << "\n[output]\n";
    out << "dir = " << c.output_dir << "\n";
    out << "format = " << c.output_format << "\n";
    return out.str();
}

void override_run_config(RunConfig& config, const std::string& key, const std::string& value) {
    const size_t dot = key.find('.');
    if (dot == std::string::npos) {
        fail(Errc::config, "override '" + key + "' must look like section.key");
    }
    assign(config, key.substr(0, dot), key.substr(dot + 1), value);
}

}  // namespace progtune
