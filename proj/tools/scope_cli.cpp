#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scope/numerics_check.hpp"
#include "scope/pipeline.hpp"
#include "scope/report.hpp"
#include "scope/weights.hpp"

namespace {

namespace fs = std::filesystem;
using namespace scope;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::string format = "csv";
    std::string weights_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_config = true) {
    auto* c = cmd->add_option("--config", a.config_path, "run configuration (JSON)");
    if (needs_config) c->required();
    cmd->add_option("--seed", a.seed, "override the top-level seed")
        ->each([&a](const std::string&) { a.seed_set = true; });
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--format", a.format, "metrics format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--weights", a.weights_path, "weight snapshot to load");
}

RunConfig load_cfg(const CommonArgs& a) {
    RunConfig cfg = load_run_config(a.config_path);
    if (a.seed_set) cfg.seed = a.seed;
    return cfg;
}

ModelWeights make_weights(const RunConfig& cfg, const CommonArgs& a) {
    ModelWeights w;
    w.build(cfg);
    if (!a.weights_path.empty()) load_weights(a.weights_path, w.named_params());
    return w;
}

void ensure_out(const CommonArgs& a) { fs::create_directories(a.out_dir); }

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        out.push_back(std::stod(csv.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

int cmd_generate(const CommonArgs& a) {
    RunConfig cfg = load_cfg(a);
    ensure_out(a);
    const std::vector<World> worlds = simulate_worlds(cfg.scenario, cfg.scenario_seed());
    const std::string path = a.out_dir + "/world_dump.json";
    write_world_dump_json(path, cfg, worlds);
    std::cout << "wrote " << path << " (" << worlds.size() << " frames, "
              << worlds.front().objects.size() << " objects, " << worlds.front().agents.size()
              << " agents)\n";
    return 0;
}

int cmd_run(const CommonArgs& a, const std::string& mode, bool dump) {
    RunConfig cfg = load_cfg(a);
    if (!mode.empty()) cfg.mode = fusion_mode_from_string(mode);
    ModelWeights w = make_weights(cfg, a);
    const std::uint64_t whash = w.hash();
    ensure_out(a);

    FrameOptions opt;
    opt.want_dumps = dump;
    const std::vector<FrameResult> frames = run_scenario(cfg, w, opt);

    const std::string metrics_path =
        a.out_dir + (a.format == "json" ? "/metrics.json" : "/metrics.csv");
    if (a.format == "json") write_metrics_json(metrics_path, cfg, whash, frames);
    else write_metrics_csv(metrics_path, cfg, whash, frames);
    write_detections_csv(a.out_dir + "/detections.csv", cfg, whash, frames);
    if (dump)
        for (const FrameResult& fr : frames) write_frame_dumps(a.out_dir, fr);

    double ap50 = 0, ap70 = 0, ms = 0;
    std::size_t bytes = 0;
    for (const FrameResult& fr : frames) {
        ap50 += fr.metrics.ap50;
        ap70 += fr.metrics.ap70;
        bytes += fr.metrics.bytes;
        ms += fr.metrics.ms_observe + fr.metrics.ms_fuse + fr.metrics.ms_decode;
    }
    std::cout << "mode=" << to_string(cfg.mode) << " frames=" << frames.size()
              << " mean_ap50=" << format_double(ap50 / frames.size())
              << " mean_ap70=" << format_double(ap70 / frames.size()) << " bytes=" << bytes
              << " wall_ms=" << format_double(ms) << "\n";
    std::cout << "wrote " << metrics_path << "\n";
    return 0;
}

int cmd_train(const CommonArgs& a, int steps, double lr) {
    RunConfig cfg = load_cfg(a);
    ModelWeights w = make_weights(cfg, a);
    ensure_out(a);

    const TrainResult res = train_toy(cfg, w, steps, lr, &std::cout);
    const std::uint64_t whash = w.hash();
    write_loss_curve_csv(a.out_dir + "/loss_curve.csv", cfg, whash, res);
    save_weights(a.out_dir + "/weights.scwt", w.named_params());

    std::cout << "initial_loss=" << format_double(res.initial_loss)
              << " final_loss=" << format_double(res.final_loss)
              << " reduction=" << format_double(1.0 - res.final_loss / res.initial_loss)
              << "\nwrote " << a.out_dir << "/weights.scwt (hash " << hash_hex(whash) << ")\n";
    return 0;
}

int cmd_ablate(const CommonArgs& a, int n_scenarios) {
    RunConfig cfg = load_cfg(a);
    ModelWeights w = make_weights(cfg, a);
    ensure_out(a);

    const std::vector<AblationRow> rows =
        ablation_run(standard_ablation_battery(cfg), w, n_scenarios);
    const std::string path =
        a.out_dir + (a.format == "json" ? "/ablation.json" : "/ablation.csv");
    if (a.format == "json") write_ablation_json(path, cfg, w.hash(), rows);
    else write_ablation_csv(path, cfg, w.hash(), rows);

    for (const AblationRow& r : rows)
        std::cout << r.name << " ap50=" << format_double(r.metrics.ap50)
                  << " ap70=" << format_double(r.metrics.ap70)
                  << " log2_bytes=" << format_double(r.metrics.log2_bytes) << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& a, const std::string& axis_name, const std::string& values_csv,
              int n_scenarios) {
    RunConfig cfg = load_cfg(a);
    ModelWeights w = make_weights(cfg, a);
    ensure_out(a);

    const SweepAxis axis = sweep_axis_from_string(axis_name);
    const std::vector<SweepPoint> points = sweep(cfg, w, axis, parse_values(values_csv), n_scenarios);
    const std::string path = a.out_dir + (a.format == "json" ? "/sweep.json" : "/sweep.csv");
    if (a.format == "json") write_sweep_json(path, cfg, w.hash(), axis, points);
    else write_sweep_csv(path, cfg, w.hash(), axis, points);

    for (const SweepPoint& p : points)
        std::cout << to_string(axis) << "=" << format_double(p.value)
                  << " ap50=" << format_double(p.metrics.ap50)
                  << " ap70=" << format_double(p.metrics.ap70)
                  << " log2_bytes=" << format_double(p.metrics.log2_bytes) << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps, double tol) {
    const std::vector<NumericsCase> cases = run_numerics_battery(seed, eps, tol);
    bool all_pass = true;
    for (const NumericsCase& c : cases) {
        std::printf("%-28s max_rel_err=%-12.3e tol=%.0e %-4s (%.2fs)\n", c.name.c_str(),
                    c.max_rel_err, c.tolerance, c.pass ? "ok" : "FAIL", c.seconds);
        all_pass = all_pass && c.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collaborative BEV perception simulator"};
    app.require_subcommand(1);

    CommonArgs a_generate, a_run, a_train, a_ablate, a_sweep;
    std::string run_mode, sweep_axis, sweep_values;
    bool run_dump = false;
    int train_steps = 200, ablate_scenarios = 3, sweep_scenarios = 3;
    double train_lr = 2e-3;
    std::uint64_t gc_seed = 7;
    double gc_eps = 1e-5, gc_tol = 1e-4;

    add_common(app.add_subcommand("generate", "write the scenario world dump"), a_generate);

    auto* run = app.add_subcommand("run", "run a scenario and write metrics + detections");
    add_common(run, a_run);
    run->add_option("--mode", run_mode, "scope | no_fusion | late_fusion | early_fusion");
    run->add_flag("--dump", run_dump, "write attention/importance map dumps");

    auto* train = app.add_subcommand("train", "toy gradient-descent training");
    add_common(train, a_train);
    train->add_option("--steps", train_steps, "gradient steps");
    train->add_option("--lr", train_lr, "learning rate");

    auto* ablate = app.add_subcommand("ablate", "component/variant ablation table");
    add_common(ablate, a_ablate);
    ablate->add_option("--scenarios", ablate_scenarios, "scenarios per row");

    auto* sw = app.add_subcommand("sweep", "noise / bandwidth sweeps");
    add_common(sw, a_sweep);
    sw->add_option("--axis", sweep_axis, "noise-xyz | noise-heading | bandwidth")->required();
    sw->add_option("--values", sweep_values, "comma-separated grid values")->required();
    sw->add_option("--scenarios", sweep_scenarios, "scenarios per point");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all adjoints");
    gc->add_option("--seed", gc_seed, "battery seed");
    gc->add_option("--eps", gc_eps, "finite-difference step");
    gc->add_option("--tol", gc_tol, "max relative error tolerance");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("generate")) return cmd_generate(a_generate);
        if (app.got_subcommand("run")) return cmd_run(a_run, run_mode, run_dump);
        if (app.got_subcommand("train")) return cmd_train(a_train, train_steps, train_lr);
        if (app.got_subcommand("ablate")) return cmd_ablate(a_ablate, ablate_scenarios);
        if (app.got_subcommand("sweep"))
            return cmd_sweep(a_sweep, sweep_axis, sweep_values, sweep_scenarios);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(gc_seed, gc_eps, gc_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
