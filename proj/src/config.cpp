#include "r3split/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace r3split::cli {

DatasetKind dataset_from_string(const std::string& s) {
    if (s == "digits") return DatasetKind::digits;
    if (s == "mnist") return DatasetKind::mnist;
    if (s == "synth") return DatasetKind::synth;
    throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

std::string to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::digits: return "digits";
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::synth: return "synth";
    }
    return "?";
}

AttackKind attack_from_string(const std::string& s) {
    if (s == "none") return AttackKind::none;
    if (s == "inference") return AttackKind::inference;
    if (s == "reconstruction") return AttackKind::reconstruction;
    if (s == "fsha") return AttackKind::fsha;
    throw std::invalid_argument("unknown attack kind '" + s + "'");
}

std::string to_string(AttackKind k) {
    switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::inference: return "inference";
    case AttackKind::reconstruction: return "reconstruction";
    case AttackKind::fsha: return "fsha";
    }
    return "?";
}

TransportKind transport_from_string(const std::string& s) {
    if (s == "inproc") return TransportKind::inproc;
    if (s == "tcp") return TransportKind::tcp;
    throw std::invalid_argument("unknown transport '" + s + "'");
}

std::string to_string(TransportKind k) {
    return k == TransportKind::inproc ? "inproc" : "tcp";
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, std::size_t line) {
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw ConfigError(line, "expected a number, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, std::size_t line) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return u;
    } catch (...) {
        throw ConfigError(line, "expected a nonnegative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, std::size_t line) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(line, "expected a boolean, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v, std::size_t line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_double(item, line));
    }
    return out;
}

template <typename Fn>
auto parse_enum(Fn&& fn, const std::string& v, std::size_t line) {
    try {
        return fn(v);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(line, e.what());
    }
}

std::string fmt_double(double v) {
    if (std::isinf(v)) return "inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void validate(const RunConfig& cfg) {
    if (!(cfg.privacy.epsilon > 0.0))
        throw ConfigError(0, "invariant violated: epsilon must be > 0, got " +
                                 fmt_double(cfg.privacy.epsilon));
    for (double e : cfg.run.sweep)
        if (!(e > 0.0)) throw ConfigError(0, "invariant violated: sweep epsilon must be > 0");
    if (!(cfg.privacy.ratio > 0.0 && cfg.privacy.ratio < 1.0))
        throw ConfigError(0, "invariant violated: ratio must be in (0,1)");
    if (cfg.privacy.k == 0) throw ConfigError(0, "invariant violated: k must be >= 1");
    if (!(cfg.privacy.clip_c > 0.0)) throw ConfigError(0, "invariant violated: c must be > 0");
    if (cfg.train.batch == 0) throw ConfigError(0, "invariant violated: batch must be >= 1");
    if (cfg.train.epochs == 0) throw ConfigError(0, "invariant violated: epochs must be >= 1");
    if (cfg.train.seeds == 0) throw ConfigError(0, "invariant violated: seeds must be >= 1");
    if (!(cfg.dataset.correlation >= 0.0 && cfg.dataset.correlation <= 1.0))
        throw ConfigError(0, "invariant violated: correlation must be in [0,1]");
    if (!cfg.run.listen.empty() && !cfg.run.connect.empty())
        throw ConfigError(0, "listen and connect are mutually exclusive");
}

} // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    bool task_explicit = false;

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "dataset" && section != "split" && section != "privacy" &&
                section != "train" && section != "attack" && section != "run")
                throw ConfigError(line_no, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(line_no, "key '" + key + "' outside a section");

        if (section == "dataset") {
            if (key == "kind")
                cfg.dataset.kind = parse_enum(dataset_from_string, value, line_no);
            else if (key == "task") {
                cfg.dataset.task = parse_enum(splitnn::task_from_string, value, line_no);
                task_explicit = true;
            } else if (key == "data_dir")
                cfg.dataset.data_dir = value;
            else if (key == "mnist_dir")
                cfg.dataset.mnist_dir = value;
            else if (key == "train_rows")
                cfg.dataset.train_rows = parse_u64(value, line_no);
            else if (key == "test_rows")
                cfg.dataset.test_rows = parse_u64(value, line_no);
            else if (key == "users")
                cfg.dataset.users = parse_u64(value, line_no);
            else if (key == "items")
                cfg.dataset.items = parse_u64(value, line_no);
            else if (key == "dim")
                cfg.dataset.dim = parse_u64(value, line_no);
            else if (key == "interactions")
                cfg.dataset.interactions = parse_u64(value, line_no);
            else if (key == "correlation")
                cfg.dataset.correlation = parse_double(value, line_no);
            else
                throw ConfigError(line_no, "unknown key '" + key + "' in [dataset]");
        } else if (section == "split") {
            if (key == "guest_width")
                cfg.split.guest_width = parse_u64(value, line_no);
            else if (key == "padding")
                cfg.split.padding = parse_bool(value, line_no);
            else if (key == "merge")
                cfg.split.merge = parse_enum(splitnn::merge_from_string, value, line_no);
            else
                throw ConfigError(line_no, "unknown key '" + key + "' in [split]");
        } else if (section == "privacy") {
            if (key == "protect")
                cfg.privacy.protect = parse_enum(splitnn::protect_from_string, value, line_no);
            else if (key == "kind")
                cfg.privacy.kind = parse_enum(splitnn::mechanism_from_string, value, line_no);
            else if (key == "epsilon")
                cfg.privacy.epsilon = parse_double(value, line_no);
            else if (key == "ratio")
                cfg.privacy.ratio = parse_double(value, line_no);
            else if (key == "k")
                cfg.privacy.k = parse_u64(value, line_no);
            else if (key == "c")
                cfg.privacy.clip_c = parse_double(value, line_no);
            else if (key == "allocation")
                cfg.privacy.allocation =
                    parse_enum(splitnn::allocation_from_string, value, line_no);
            else if (key == "schedule")
                cfg.privacy.schedule =
                    parse_enum(privacy::schedule_from_string, value, line_no);
            else if (key == "draw") {
                if (value == "uniform")
                    cfg.privacy.draw = privacy::ResponseDraw::uniform;
                else if (value == "normal")
                    cfg.privacy.draw = privacy::ResponseDraw::normal;
                else
                    throw ConfigError(line_no, "draw must be uniform|normal");
            } else if (key == "backward_noise_all")
                cfg.privacy.backward_noise_all = parse_bool(value, line_no);
            else if (key == "budget_cap")
                cfg.privacy.budget_cap = parse_double(value, line_no);
            else if (key == "delta")
                cfg.privacy.delta = parse_double(value, line_no);
            else
                throw ConfigError(line_no, "unknown key '" + key + "' in [privacy]");
        } else if (section == "train") {
            if (key == "epochs")
                cfg.train.epochs = parse_u64(value, line_no);
            else if (key == "batch")
                cfg.train.batch = parse_u64(value, line_no);
            else if (key == "lr")
                cfg.train.lr = parse_double(value, line_no);
            else if (key == "optimizer") {
                if (value == "adam")
                    cfg.train.optimizer = nn::OptimizerKind::adam;
                else if (value == "sgd")
                    cfg.train.optimizer = nn::OptimizerKind::sgd;
                else
                    throw ConfigError(line_no, "optimizer must be adam|sgd");
            } else if (key == "seed")
                cfg.train.seed = parse_u64(value, line_no);
            else if (key == "seeds")
                cfg.train.seeds = parse_u64(value, line_no);
            else
                throw ConfigError(line_no, "unknown key '" + key + "' in [train]");
        } else if (section == "attack") {
            if (key == "kind")
                cfg.attack.kind = parse_enum(attack_from_string, value, line_no);
            else if (key == "side")
                cfg.attack.side = parse_enum(attacks::side_from_string, value, line_no);
            else if (key == "iterations")
                cfg.attack.iterations = parse_u64(value, line_no);
            else if (key == "shadow_fraction")
                cfg.attack.shadow_fraction = parse_double(value, line_no);
            else if (key == "latent")
                cfg.attack.latent = parse_u64(value, line_no);
            else if (key == "scale")
                cfg.attack.scale = parse_double(value, line_no);
            else if (key == "attack_lr")
                cfg.attack.attack_lr = parse_double(value, line_no);
            else
                throw ConfigError(line_no, "unknown key '" + key + "' in [attack]");
        } else if (section == "run") {
            if (key == "transport")
                cfg.run.transport = parse_enum(transport_from_string, value, line_no);
            else if (key == "listen")
                cfg.run.listen = value;
            else if (key == "connect")
                cfg.run.connect = value;
            else if (key == "out_dir")
                cfg.run.out_dir = value;
            else if (key == "sweep")
                cfg.run.sweep = parse_double_list(value, line_no);
            else
                throw ConfigError(line_no, "unknown key '" + key + "' in [run]");
        }
    }
    if (!task_explicit)
        cfg.dataset.task = cfg.dataset.kind == DatasetKind::synth
                               ? splitnn::TaskKind::recommendation
                               : splitnn::TaskKind::classification;
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[dataset]\n";
    out << "kind = " << to_string(cfg.dataset.kind) << "\n";
    out << "task = " << splitnn::to_string(cfg.dataset.task) << "\n";
    out << "data_dir = " << cfg.dataset.data_dir << "\n";
    if (!cfg.dataset.mnist_dir.empty()) out << "mnist_dir = " << cfg.dataset.mnist_dir << "\n";
    out << "train_rows = " << cfg.dataset.train_rows << "\n";
    out << "test_rows = " << cfg.dataset.test_rows << "\n";
    out << "users = " << cfg.dataset.users << "\n";
    out << "items = " << cfg.dataset.items << "\n";
    out << "dim = " << cfg.dataset.dim << "\n";
    out << "interactions = " << cfg.dataset.interactions << "\n";
    out << "correlation = " << fmt_double(cfg.dataset.correlation) << "\n";
    out << "\n[split]\n";
    out << "guest_width = " << cfg.split.guest_width << "\n";
    out << "padding = " << (cfg.split.padding ? "true" : "false") << "\n";
    out << "merge = " << splitnn::to_string(cfg.split.merge) << "\n";
    out << "\n[privacy]\n";
    out << "protect = " << splitnn::to_string(cfg.privacy.protect) << "\n";
    out << "kind = " << splitnn::to_string(cfg.privacy.kind) << "\n";
    out << "epsilon = " << fmt_double(cfg.privacy.epsilon) << "\n";
    out << "ratio = " << fmt_double(cfg.privacy.ratio) << "\n";
    out << "k = " << cfg.privacy.k << "\n";
    out << "c = " << fmt_double(cfg.privacy.clip_c) << "\n";
    out << "allocation = " << splitnn::to_string(cfg.privacy.allocation) << "\n";
    out << "schedule = " << privacy::to_string(cfg.privacy.schedule) << "\n";
    out << "draw = "
        << (cfg.privacy.draw == privacy::ResponseDraw::uniform ? "uniform" : "normal") << "\n";
    out << "backward_noise_all = " << (cfg.privacy.backward_noise_all ? "true" : "false")
        << "\n";
    out << "budget_cap = " << fmt_double(cfg.privacy.budget_cap) << "\n";
    out << "delta = " << fmt_double(cfg.privacy.delta) << "\n";
    out << "\n[train]\n";
    out << "epochs = " << cfg.train.epochs << "\n";
    out << "batch = " << cfg.train.batch << "\n";
    out << "lr = " << fmt_double(cfg.train.lr) << "\n";
    out << "optimizer = " << (cfg.train.optimizer == nn::OptimizerKind::adam ? "adam" : "sgd")
        << "\n";
    out << "seed = " << cfg.train.seed << "\n";
    out << "seeds = " << cfg.train.seeds << "\n";
    out << "\n[attack]\n";
    out << "kind = " << to_string(cfg.attack.kind) << "\n";
    out << "side = " << attacks::to_string(cfg.attack.side) << "\n";
    out << "iterations = " << cfg.attack.iterations << "\n";
    out << "shadow_fraction = " << fmt_double(cfg.attack.shadow_fraction) << "\n";
    out << "latent = " << cfg.attack.latent << "\n";
    out << "scale = " << fmt_double(cfg.attack.scale) << "\n";
    out << "attack_lr = " << fmt_double(cfg.attack.attack_lr) << "\n";
    out << "\n[run]\n";
    out << "transport = " << to_string(cfg.run.transport) << "\n";
    if (!cfg.run.listen.empty()) out << "listen = " << cfg.run.listen << "\n";
    if (!cfg.run.connect.empty()) out << "connect = " << cfg.run.connect << "\n";
    out << "out_dir = " << cfg.run.out_dir << "\n";
    if (!cfg.run.sweep.empty()) {
        out << "sweep = ";
        for (std::size_t i = 0; i < cfg.run.sweep.size(); ++i)
            out << (i ? "," : "") << fmt_double(cfg.run.sweep[i]);
        out << "\n";
    }
    return out.str();
}

} // namespace r3split::cli
