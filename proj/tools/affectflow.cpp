// affectflow command-line front-end: build the continuous dataset, train the
// latent dynamics model, run inference, export steering vectors, and emit
// plot/statistics data. See README.md for the file formats.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "affectflow/cli.hpp"

namespace {

using affectflow::cli::PipelineConfig;

// Config file first, explicit flags win.
void add_common_options(CLI::App* cmd, PipelineConfig& cfg, std::string& config_path) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--seed", cfg.seed, "root seed for all stochastic components");
    cmd->add_flag("--verbose", cfg.verbose, "extra progress output on stderr");
}

void apply_config_first(CLI::App* cmd, PipelineConfig& cfg, const std::string& config_path) {
    if (config_path.empty()) return;
    PipelineConfig merged;
    affectflow::cli::apply_config_file(config_path, merged);
    // Options the user did not pass explicitly adopt the file's values.
    auto passed = [&](const std::string& name) {
        const CLI::Option* opt = cmd->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (!passed("--out")) cfg.out_dir = merged.out_dir;
    if (!passed("--seed")) cfg.seed = merged.seed;
    if (!passed("--input")) cfg.input_path = merged.input_path;
    if (!passed("--annotations")) cfg.annotations_path = merged.annotations_path;
    if (!passed("--anchors")) cfg.anchors_path = merged.anchors_path;
    if (!passed("--segment")) cfg.segment_id = merged.segment_id;
    if (!passed("--mode")) cfg.mode = merged.mode;
    if (!passed("--format")) cfg.format = merged.format;
    if (!passed("--factor")) cfg.factor = merged.factor;
    if (!passed("--samples")) cfg.plot_samples = merged.plot_samples;
    if (!passed("--lambda-base")) cfg.lambda_base = merged.lambda_base;
    if (!passed("--delta")) cfg.annotation.delta = merged.annotation.delta;
    if (!passed("--endpoint")) cfg.annotation.endpoint_url = merged.annotation.endpoint_url;
    if (!passed("--batch-size")) cfg.annotation.batch_size = merged.annotation.batch_size;
    if (!passed("--max-concurrent"))
        cfg.annotation.max_concurrent = merged.annotation.max_concurrent;
    if (!passed("--lr")) cfg.train.lr = merged.train.lr;
    if (!passed("--batch-segments")) cfg.train.batch_segments = merged.train.batch_segments;
    if (!passed("--max-steps")) cfg.train.max_steps = merged.train.max_steps;
    if (!passed("--latent-dim")) cfg.train.latent_dim = merged.train.latent_dim;
    if (!passed("--lagged-inputs"))
        cfg.train.lagged_emotion_inputs = merged.train.lagged_emotion_inputs;
    if (!passed("--rtol")) cfg.solver.rtol = merged.solver.rtol;
    if (!passed("--atol")) cfg.solver.atol = merged.solver.atol;
    cfg.train.patience_window = merged.train.patience_window;
    cfg.train.stop_eps = merged.train.stop_eps;
    cfg.schema = merged.schema;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"affectflow: continuous affective trajectories from conversational annotations"};
    app.require_subcommand(1);

    PipelineConfig cfg;
    std::string config_path;
    if (const char* token = std::getenv("AFFECTFLOW_API_TOKEN")) cfg.annotation.api_token = token;

    CLI::App* build = app.add_subcommand("build", "ingest, annotate, interpolate, write dataset");
    add_common_options(build, cfg, config_path);
    build->add_option("--input", cfg.input_path, "raw corpus CSV");
    build->add_option("--annotations", cfg.annotations_path, "precomputed e0..e5 CSV");
    build->add_option("--endpoint", cfg.annotation.endpoint_url, "annotation endpoint base URL");
    build->add_option("--delta", cfg.annotation.delta, "softmax temperature for endpoint logits");
    build->add_option("--batch-size", cfg.annotation.batch_size, "endpoint batch size");
    build->add_option("--max-concurrent", cfg.annotation.max_concurrent,
                      "max in-flight endpoint batches");
    build->add_option("--factor", cfg.factor, "resample factor per spline piece");
    build->add_option("--format", cfg.format, "dataset format: csv or jsonl");

    CLI::App* train = app.add_subcommand("train", "fit the latent dynamics model");
    add_common_options(train, cfg, config_path);
    train->add_option("--lr", cfg.train.lr, "Adam learning rate");
    train->add_option("--batch-segments", cfg.train.batch_segments, "segments per step");
    train->add_option("--max-steps", cfg.train.max_steps, "step budget");
    train->add_option("--latent-dim", cfg.train.latent_dim, "latent dimension");
    train->add_flag("--lagged-inputs", cfg.train.lagged_emotion_inputs,
                    "feed previous-row emotions as extra inputs");
    train->add_flag("--resume", cfg.resume, "continue from the existing checkpoint");

    CLI::App* infer = app.add_subcommand("infer", "predict one segment's trajectory");
    add_common_options(infer, cfg, config_path);
    infer->add_option("--segment", cfg.segment_id, "conversation id to predict")->required();
    infer->add_option("--mode", cfg.mode, "fixed | adaptive");
    infer->add_option("--rtol", cfg.solver.rtol, "adaptive solver relative tolerance");
    infer->add_option("--atol", cfg.solver.atol, "adaptive solver absolute tolerance");

    CLI::App* exps = app.add_subcommand("export-steering", "write steering vectors as JSONL");
    add_common_options(exps, cfg, config_path);
    exps->add_option("--anchors", cfg.anchors_path, "anchor CSV (6 rows x D_emb)");
    exps->add_option("--lambda-base", cfg.lambda_base, "base steering strength");
    exps->add_option("--mode", cfg.mode, "fixed | adaptive");

    CLI::App* plot = app.add_subcommand("plotdata", "emit (angle, value, delta) sample triples");
    add_common_options(plot, cfg, config_path);
    plot->add_option("--samples", cfg.plot_samples, "subsample size (never oversamples)");

    CLI::App* stats = app.add_subcommand("stats", "summary statistics of the dataset");
    add_common_options(stats, cfg, config_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        apply_config_first(active, cfg, config_path);
    } catch (const std::exception& e) {
        std::cerr << "config: " << e.what() << "\n";
        return 2;
    }

    if (active == build) return affectflow::cli::cmd_build(cfg);
    if (active == train) return affectflow::cli::cmd_train(cfg);
    if (active == infer) return affectflow::cli::cmd_infer(cfg);
    if (active == exps) return affectflow::cli::cmd_export_steering(cfg);
    if (active == plot) return affectflow::cli::cmd_plotdata(cfg);
    if (active == stats) return affectflow::cli::cmd_stats(cfg);
    return 2;
}
