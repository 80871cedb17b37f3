// crossdino: command-line front end for the tiling planner, the cross-coding
// gradient check, the loss weight table, the toy trainer and score statistics.
//
// Every subcommand accepts --config FILE with `key = value` lines.
// Exit codes: 0 success, 1 invalid input or arguments, 2 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "crossdino/crossdino.hpp"

namespace {

using namespace crossdino;

constexpr int kExitInput = 1;
constexpr int kExitNumeric = 2;
constexpr double kGradTolerance = 1e-4;

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, sep)) {
        if (item.empty()) throw ParseError("empty item in list '" + text + "'");
        out.push_back(item);
    }
    if (out.empty()) throw ParseError("empty list");
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw ParseError("not a number: '" + s + "'");
    return v;
}

std::size_t parse_size(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError("not a non-negative integer: '" + s + "'");
    }
    return std::stoull(s);
}

/// "HxW" -> {H, W}
std::pair<double, double> parse_extent(const std::string& s) {
    const auto parts = split_list(s, 'x');
    if (parts.size() != 2) throw ParseError("expected HxW, got '" + s + "'");
    return {parse_double(parts[0]), parse_double(parts[1])};
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
    return out;
}

std::string size_label(const boost::ObjectSize& s) {
    std::ostringstream os;
    os << s.h << 'x' << s.w;
    return os.str();
}

/// Writes `body` to `path` plus a `path.schema` sidecar, or to stdout when
/// no path is given.
void emit(const std::string& path, const std::string& body, std::string_view schema) {
    if (path.empty()) {
        std::cout << body;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path);
    out << body;
    std::ofstream side(path + ".schema", std::ios::binary);
    if (!side) throw ParseError("cannot write " + path + ".schema");
    side << schema << '\n';
    if (!out || !side) throw ParseError("write failed for " + path);
}

struct ClapPlanArgs {
    std::size_t width = 0, height = 0, patch_w = 224, patch_h = 224;
};

int run_clap_plan(const ClapPlanArgs& a) {
    const auto g = clap::plan_grid(a.width, a.height, a.patch_w, a.patch_h);
    std::cout << "width,height,patch_w,patch_h,n_w,n_h,l_w,l_h,starts_x,starts_y\n"
              << g.width() << ',' << g.height() << ',' << g.patch_w() << ',' << g.patch_h() << ',' << g.n_w() << ','
              << g.n_h() << ',' << g.l_w() << ',' << g.l_h() << ',' << join(g.x.starts) << ',' << join(g.y.starts)
              << '\n';
    return 0;
}

struct CctmCheckArgs {
    std::uint64_t seed = 0;
    std::size_t count = 1;
    std::string shape = "1,3,5";
};

int run_cctm_check(const CctmCheckArgs& a) {
    Shape shape;
    for (const auto& s : split_list(a.shape, ',')) shape.push_back(parse_size(s));
    if (shape.size() != 3) throw DimensionError("cctm-check: shape must be B,C,L");
    for (auto d : shape) {
        if (d == 0) throw DimensionError("cctm-check: shape extents must be positive");
    }
    std::string label;
    for (std::size_t i = 0; i < shape.size(); ++i) label += (i ? "x" : "") + std::to_string(shape[i]);

    bool all = true;
    std::cout << "seed,shape,max_rel_err,pass\n";
    for (std::size_t k = 0; k < a.count; ++k) {
        const auto r = cctm::gradient_check(a.seed + k, shape);
        const bool pass = r.max_rel_err < kGradTolerance;
        all = all && pass;
        std::cout << a.seed + k << ',' << label << ',' << harness::scientific(r.max_rel_err) << ','
                  << (pass ? "true" : "false") << '\n';
    }
    return all ? 0 : kExitNumeric;
}

struct BoostTableArgs {
    std::string image = "1024x1024";
    std::string sizes = "2x2,8x8,80x80";
    double gamma = 0.25;
    std::string betas = "0.05,0.1,0.25,1.0";
    int decimals = 4;
};

int run_boost_table(const BoostTableArgs& a) {
    const auto [image_h, image_w] = parse_extent(a.image);
    std::vector<boost::ObjectSize> sizes;
    for (const auto& s : split_list(a.sizes, ',')) {
        const auto [h, w] = parse_extent(s);
        sizes.push_back({h, w});
    }
    const auto beta_labels = split_list(a.betas, ',');
    std::vector<double> betas;
    for (const auto& s : beta_labels) betas.push_back(parse_double(s));
    for (double b : betas) {
        if (!(b > 0.0 && b <= 1.0)) throw DomainError("boost-table: beta must lie in (0, 1]");
    }
    const auto t = boost::weight_table(sizes, image_h, image_w, a.gamma, betas, a.decimals);
    const int d = a.decimals < 0 ? 10 : a.decimals;

    std::cout << "kind,item,beta,value\n";
    for (const auto& row : t.rows) {
        const auto item = size_label(row.size);
        std::cout << "cs_hat," << item << ",-," << harness::fixed(row.cs_hat, d) << '\n';
        std::cout << "weight," << item << ",base," << harness::fixed(row.base, d) << '\n';
        for (std::size_t k = 0; k < betas.size(); ++k) {
            std::cout << "weight," << item << ',' << beta_labels[k] << ','
                      << harness::fixed(row.beta_weights[k], d) << '\n';
        }
    }
    for (const auto& rd : t.distances) {
        const auto item = size_label(t.rows[rd.smaller].size) + "-" + size_label(t.rows[rd.larger].size);
        std::cout << "rd," << item << ",base," << harness::fixed(rd.base, d) << '\n';
        for (std::size_t k = 0; k < betas.size(); ++k) {
            std::cout << "rd," << item << ',' << beta_labels[k] << ','
                      << harness::fixed(rd.beta_values[k], d) << '\n';
        }
        for (std::size_t k = 0; k < betas.size(); ++k) {
            std::cout << "amplification," << item << ',' << beta_labels[k] << ','
                      << harness::fixed(rd.amplification[k], 1) << '\n';
        }
    }
    return 0;
}

struct BoostTrainArgs {
    std::string loss = "boost";
    harness::RunConfig cfg;
};

int run_boost_train(BoostTrainArgs a) {
    a.cfg.loss = a.loss == "focal" ? harness::LossKind::focal : harness::LossKind::boost;
    a.cfg.validate();
    const auto data = harness::synth_dataset(a.cfg.seed, a.cfg.n);
    const auto metrics = harness::train_toy(data, a.cfg);
    std::ostringstream os;
    harness::write_metrics_csv(os, metrics, a.cfg);
    emit(a.cfg.out, os.str(), harness::kMetricsSchema);
    return 0;
}

struct ScoreStatsArgs {
    std::string in;
    double threshold = 0.4;
    std::string edges = "0,16,32,64,128,256";
    std::string out;
};

int run_score_stats(const ScoreStatsArgs& a) {
    std::vector<double> edges;
    for (const auto& s : split_list(a.edges, ',')) edges.push_back(parse_double(s));
    const auto dets = harness::ingest_coco_results(a.in);
    const auto stats = harness::score_stats(dets, a.threshold, edges);
    std::ostringstream os;
    harness::write_score_stats_csv(os, stats);
    emit(a.out, os.str(), harness::kScoreStatsSchema);
    return 0;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Expands `--config FILE` into `--key value` arguments. The file holds
/// `key = value` lines with '#' comments; keys are long option names.
/// Options given on the command line win over the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ParseError("--config needs a file");
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty()) return args;

    std::ifstream in(path);
    if (!in) throw ParseError("config: cannot open " + path);
    auto given = [&args](const std::string& key) {
        for (const auto& a : args) {
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
        }
        return false;
    };
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config " + path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty() || key == "config") {
            throw ParseError("config " + path + ":" + std::to_string(lineno) + ": invalid key");
        }
        if (!given(key)) {
            args.push_back("--" + key);
            args.push_back(value);
        }
    }
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"crossdino: tiling planner, cross-coding checks and size-aware loss tools"};
    app.require_subcommand(1);
    int code = 0;

    ClapPlanArgs plan;
    auto* plan_cmd = app.add_subcommand("clap-plan", "print the overlapping patch grid for an input size");
    plan_cmd->add_option("--width", plan.width, "input width W")->required();
    plan_cmd->add_option("--height", plan.height, "input height H")->required();
    plan_cmd->add_option("--patch-w", plan.patch_w, "patch width W_o")->capture_default_str();
    plan_cmd->add_option("--patch-h", plan.patch_h, "patch height H_o")->capture_default_str();
    plan_cmd->callback([&] { code = run_clap_plan(plan); });

    CctmCheckArgs check;
    auto* check_cmd = app.add_subcommand("cctm-check", "compare the analytic cross-coding gradient with finite differences");
    check_cmd->add_option("--seed", check.seed, "first seed")->capture_default_str();
    check_cmd->add_option("--count", check.count, "number of consecutive seeds")->capture_default_str();
    check_cmd->add_option("--shape", check.shape, "feature shape B,C,L")->capture_default_str();
    check_cmd->callback([&] { code = run_cctm_check(check); });

    BoostTableArgs table;
    auto* table_cmd = app.add_subcommand("boost-table", "loss weights and relative distances across object sizes");
    table_cmd->add_option("--image", table.image, "image extent HxW")->capture_default_str();
    table_cmd->add_option("--sizes", table.sizes, "object sizes HxW, comma separated")->capture_default_str();
    table_cmd->add_option("--gamma", table.gamma, "focusing exponent")->capture_default_str();
    table_cmd->add_option("--betas", table.betas, "beta values, comma separated")->capture_default_str();
    table_cmd->add_option("--decimals", table.decimals, "printed precision; negative keeps full precision")
        ->capture_default_str();
    table_cmd->callback([&] { code = run_boost_table(table); });

    BoostTrainArgs train;
    auto* train_cmd = app.add_subcommand("boost-train", "train the toy detector head on synthetic data");
    train_cmd->add_option("--loss", train.loss, "boost or focal")
        ->check(CLI::IsMember({"boost", "focal"}))
        ->capture_default_str();
    train_cmd->add_option("--alpha", train.cfg.alpha)->capture_default_str();
    train_cmd->add_option("--beta", train.cfg.beta)->capture_default_str();
    train_cmd->add_option("--gamma", train.cfg.gamma)->capture_default_str();
    train_cmd->add_option("--epochs", train.cfg.epochs)->capture_default_str();
    train_cmd->add_option("--lr", train.cfg.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--seed", train.cfg.seed)->capture_default_str();
    train_cmd->add_option("--n", train.cfg.n, "dataset size")->capture_default_str();
    train_cmd->add_option("--out", train.cfg.out, "metrics CSV path (stdout if omitted)");
    train_cmd->callback([&] { code = run_boost_train(train); });

    ScoreStatsArgs stats;
    auto* stats_cmd = app.add_subcommand("score-stats", "mean detection score per object size bucket");
    stats_cmd->add_option("--in", stats.in, "COCO results JSON")->required();
    stats_cmd->add_option("--threshold", stats.threshold)->capture_default_str();
    stats_cmd->add_option("--edges", stats.edges, "bucket edges on sqrt(w*h)")->capture_default_str();
    stats_cmd->add_option("--out", stats.out, "CSV path (stdout if omitted)");
    stats_cmd->callback([&] { code = run_score_stats(stats); });

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const EvaluationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return code;
}
