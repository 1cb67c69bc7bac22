#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectflow/affectmodel.hpp"
#include "affectflow/annotate.hpp"
#include "affectflow/annotate_http.hpp"
#include "affectflow/cemoflow.hpp"
#include "affectflow/common.hpp"
#include "affectflow/ingest.hpp"
#include "affectflow/rng.hpp"
#include "affectflow/steering.hpp"
#include "affectflow/temporal.hpp"

namespace affectflow::cli {

struct PipelineConfig {
    std::string input_path;
    std::string annotations_path;
    std::string out_dir = "out";
    std::string anchors_path;
    std::string segment_id;
    std::string mode = "adaptive";  // fixed | adaptive
    std::string format = "csv";     // cemoflow output format: csv | jsonl
    int factor = 26;
    std::uint64_t seed = 42;
    long plot_samples = 250000;
    double lambda_base = 1.0;
    bool resume = false;
    bool verbose = false;
    annotate::AnnotationConfig annotation;
    model::TrainConfig train;
    ode::SolverConfig solver;
    ingest::CsvSchema schema;

    std::string cemoflow_path() const { return out_dir + "/cemoflow." + format; }
    std::string cemoflow_csv_path() const { return out_dir + "/cemoflow.csv"; }
    std::string segment_index_path() const { return out_dir + "/cemoflow_segments.json"; }
    std::string stats_path() const { return out_dir + "/stats.json"; }
    std::string removal_report_path() const { return out_dir + "/removal_report.json"; }
    std::string checkpoint_path() const { return out_dir + "/checkpoint.json"; }
    std::string loss_history_path() const { return out_dir + "/loss_history.csv"; }
    std::string steering_path() const { return out_dir + "/steering.jsonl"; }
};

// Key = value per line, '#' comments. Unknown keys are rejected so typos
// cannot silently fall back to defaults. Flags parsed afterwards win.
inline void apply_config_file(const std::string& path, PipelineConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](const std::string& s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw input_error(path + ", line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string context = path + ", line " + std::to_string(lineno);

        auto as_long = [&] { return static_cast<long>(csv::parse_double(value, context)); };
        auto as_int = [&] { return static_cast<int>(csv::parse_double(value, context)); };
        auto as_bool = [&] {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw input_error(context + ": expected true/false");
        };

        if (key == "input") cfg.input_path = value;
        else if (key == "annotations") cfg.annotations_path = value;
        else if (key == "out") cfg.out_dir = value;
        else if (key == "anchors") cfg.anchors_path = value;
        else if (key == "segment") cfg.segment_id = value;
        else if (key == "mode") cfg.mode = value;
        else if (key == "format") cfg.format = value;
        else if (key == "factor") cfg.factor = as_int();
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_long());
        else if (key == "plot_samples") cfg.plot_samples = as_long();
        else if (key == "lambda_base") cfg.lambda_base = csv::parse_double(value, context);
        else if (key == "delta") cfg.annotation.delta = csv::parse_double(value, context);
        else if (key == "endpoint") cfg.annotation.endpoint_url = value;
        else if (key == "batch_size") cfg.annotation.batch_size = as_int();
        else if (key == "max_concurrent") cfg.annotation.max_concurrent = as_int();
        else if (key == "lr") cfg.train.lr = csv::parse_double(value, context);
        else if (key == "batch_segments") cfg.train.batch_segments = as_int();
        else if (key == "max_steps") cfg.train.max_steps = as_long();
        else if (key == "latent_dim") cfg.train.latent_dim = as_int();
        else if (key == "patience_window") cfg.train.patience_window = as_int();
        else if (key == "stop_eps") cfg.train.stop_eps = csv::parse_double(value, context);
        else if (key == "lagged_inputs") cfg.train.lagged_emotion_inputs = as_bool();
        else if (key == "rtol") cfg.solver.rtol = csv::parse_double(value, context);
        else if (key == "atol") cfg.solver.atol = csv::parse_double(value, context);
        else if (key == "timestamp_column") cfg.schema.timestamp = value;
        else if (key == "conversation_column") cfg.schema.conversation_id = value;
        else if (key == "speaker_column") cfg.schema.speaker_id = value;
        else if (key == "text_column") cfg.schema.text = value;
        else throw input_error(context + ": unknown key '" + key + "'");
    }
}

namespace detail {

template <class Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const numeric_error& e) {
        throw numeric_error(name + ": " + e.what());
    } catch (const input_error& e) {
        throw input_error(name + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw input_error(name + ": " + e.what());
    }
}

inline void ensure_out_dir(const PipelineConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw input_error("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path);
    out << text;
}

struct IngestResult {
    std::vector<cemoflow::AnnotatedSegment> segments;
    ingest::RemovalReport report;
    std::size_t record_count = 0;
};

inline IngestResult run_ingest_and_annotate(const PipelineConfig& cfg);

// Feature layout fed to the dynamics model:
// [sin_h, cos_h, sin_m, cos_m, sin_s, cos_s, tau, delta] and, when lagged
// inputs are on, the previous row's six emotion values.
inline std::vector<double> row_features(const cemoflow::CemoflowRow& row,
                                        const cemoflow::CemoflowRow& prev, bool lagged) {
    std::vector<double> x = {row.cols[9], row.cols[10], row.cols[11], row.cols[12],
                             row.cols[13], row.cols[14], row.cols[1], row.cols[8]};
    if (lagged)
        for (std::size_t j = 0; j < kNumEmotions; ++j) x.push_back(prev.cols[2 + j]);
    return x;
}

}  // namespace detail

// Converts dataset rows into per-segment training trajectories. Times are
// rebased to each segment's first row (the dynamics are time-invariant, so
// only intervals matter). Noise-flagged segments are dropped unless
// include_noise is set.
inline std::vector<std::vector<model::TrajectorySample>> to_training_segments(
    const std::vector<cemoflow::CemoflowRow>& rows,
    const std::vector<cemoflow::SegmentRange>& ranges, bool lagged_inputs,
    bool include_noise = false) {
    std::vector<std::vector<model::TrajectorySample>> dataset;
    for (const auto& range : ranges) {
        if (range.noise && !include_noise) continue;
        if (range.first_row + range.row_count > rows.size())
            throw input_error("segment index points past the end of the dataset");
        std::vector<model::TrajectorySample> seg;
        seg.reserve(range.row_count);
        const double t0 = rows[range.first_row].t_tilde();
        for (std::size_t i = 0; i < range.row_count; ++i) {
            const auto& row = rows[range.first_row + i];
            const auto& prev = rows[range.first_row + (i > 0 ? i - 1 : 0)];
            model::TrajectorySample s;
            s.t = row.t_tilde() - t0;
            s.features = detail::row_features(row, prev, lagged_inputs);
            for (std::size_t j = 0; j < kNumEmotions; ++j) s.target.e[j] = row.emotion(j);
            seg.push_back(std::move(s));
        }
        dataset.push_back(std::move(seg));
    }
    return dataset;
}

namespace detail {

inline IngestResult run_ingest_and_annotate(const PipelineConfig& cfg) {
    IngestResult result;
    auto records = run_stage("ingest", [&] {
        if (cfg.input_path.empty()) throw input_error("no input path configured");
        return ingest::parse_corpus(cfg.input_path, cfg.schema);
    });
    auto [cleaned, report] = run_stage("clean", [&] { return ingest::clean(std::move(records)); });
    result.report = report;
    auto sorted = ingest::sort_chronologically(std::move(cleaned));
    result.record_count = sorted.size();

    const auto emotions = run_stage("annotate", [&]() -> std::vector<annotate::EmotionVector> {
        if (!cfg.annotations_path.empty())
            return annotate::annotate_from_file(sorted, cfg.annotations_path);
        if (!cfg.annotation.endpoint_url.empty())
            return annotate::annotate_from_endpoint(sorted, cfg.annotation);
        throw input_error("no annotation source configured (set annotations or endpoint)");
    });

    const auto segments = run_stage("segment", [&] { return ingest::segment(sorted); });

    // Re-align emotions with the grouped records; segment() preserves
    // within-conversation order.
    std::map<std::string, std::vector<annotate::EmotionVector>> per_conv;
    for (std::size_t i = 0; i < sorted.size(); ++i)
        per_conv[sorted[i].conversation_id].push_back(emotions[i]);
    std::map<std::string, std::size_t> taken;
    for (const auto& seg : segments) {
        cemoflow::AnnotatedSegment annotated;
        annotated.segment = seg;
        auto& queue = per_conv[seg.conversation_id];
        auto& offset = taken[seg.conversation_id];
        annotated.emotions.assign(queue.begin() + static_cast<std::ptrdiff_t>(offset),
                                  queue.begin() + static_cast<std::ptrdiff_t>(offset + seg.records.size()));
        offset += seg.records.size();
        result.segments.push_back(std::move(annotated));
    }
    return result;
}

}  // namespace detail

// build: ingest -> clean -> sort -> annotate -> segment -> interpolate,
// then write the dataset, the segment index, the stats report and the
// removal report.
inline int cmd_build(const PipelineConfig& cfg) {
    try {
        detail::ensure_out_dir(cfg);
        detail::IngestResult ingested = detail::run_ingest_and_annotate(cfg);

        if (cfg.verbose) {
            // Comparison of the two delay readings (full timestamp vs the
            // raw ss field) across the sorted corpus.
            std::vector<ingest::UtteranceRecord> all;
            for (const auto& s : ingested.segments)
                all.insert(all.end(), s.segment.records.begin(), s.segment.records.end());
            all = ingest::sort_chronologically(std::move(all));
            const auto full = temporal::compute_delay(all);
            const auto ss_only = temporal::compute_delay_ss_field(all);
            std::size_t differing = 0;
            for (std::size_t i = 0; i < full.size(); ++i)
                if (full[i] != ss_only[i]) ++differing;
            std::cerr << "delay readings: full-timestamp vs ss-field differ on " << differing
                      << "/" << full.size() << " rows\n";
        }

        const cemoflow::CemoflowBuild built = detail::run_stage(
            "interpolate", [&] { return cemoflow::build_cemoflow(ingested.segments, cfg.factor); });

        const cemoflow::FileFormat fmt =
            cfg.format == "jsonl" ? cemoflow::FileFormat::jsonl : cemoflow::FileFormat::csv;
        detail::run_stage("write", [&] {
            cemoflow::write_cemoflow(built.rows, cfg.cemoflow_path(), fmt);
            cemoflow::write_segment_index(built.ranges, cfg.segment_index_path());
            const auto stats = cemoflow::summary_stats(built.rows);
            detail::write_text(cfg.stats_path(), cemoflow::stats_to_json(stats).dump(2) + "\n");
            nlohmann::ordered_json rj;
            rj["removed_rows"] = ingested.report.removed_rows;
            rj["flagged_windows"] = ingested.report.flagged_windows;
            rj["stripped_links"] = ingested.report.stripped_links;
            detail::write_text(cfg.removal_report_path(), rj.dump(2) + "\n");
            return 0;
        });

        std::cout << "build: " << ingested.record_count << " records -> " << built.rows.size()
                  << " rows in " << built.ranges.size() << " segments -> " << cfg.cemoflow_path()
                  << "\n";
        return 0;
    } catch (const numeric_error& e) {
        std::cerr << "build: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "build: " << e.what() << "\n";
        return 2;
    }
}

inline int cmd_train(const PipelineConfig& cfg) {
    try {
        detail::ensure_out_dir(cfg);
        const auto rows = cemoflow::read_cemoflow_csv(cfg.cemoflow_csv_path());
        const auto ranges = cemoflow::read_segment_index(cfg.segment_index_path());
        const auto dataset =
            to_training_segments(rows, ranges, cfg.train.lagged_emotion_inputs);
        if (dataset.empty()) throw input_error("train: no non-noise segments in dataset");

        std::optional<model::ResumeState> resume;
        long step0 = 0;
        if (cfg.resume && std::filesystem::exists(cfg.checkpoint_path())) {
            const model::Checkpoint prev = model::load_checkpoint(cfg.checkpoint_path());
            resume = model::ResumeState{prev.params, prev.adam, prev.step};
            step0 = prev.step;
        }

        model::TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, "train");
        model::AdamState adam;
        const model::TrainResult result = model::train(dataset, tc, resume, &adam);

        model::Checkpoint ckpt;
        ckpt.params = result.params;
        ckpt.adam = adam;
        ckpt.cfg = tc;
        ckpt.step = step0 + result.steps_run;
        model::save_checkpoint(cfg.checkpoint_path(), ckpt);

        const bool append = cfg.resume && step0 > 0 &&
                            std::filesystem::exists(cfg.loss_history_path());
        std::ofstream hist(cfg.loss_history_path(),
                           append ? (std::ios::binary | std::ios::app) : std::ios::binary);
        if (!hist) throw input_error("cannot write " + cfg.loss_history_path());
        if (!append) hist << "step,loss\n";
        for (std::size_t i = 0; i < result.loss_history.size(); ++i)
            hist << (step0 + static_cast<long>(i) + 1) << ","
                 << csv::format_double(result.loss_history[i]) << "\n";

        std::cout << "train: " << result.steps_run << " steps, final loss "
                  << csv::format_double(result.loss_history.back()) << ", "
                  << (result.early_stopped ? "early stopping fired" : "max_steps reached") << "\n";
        return 0;
    } catch (const numeric_error& e) {
        std::cerr << "train: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return 2;
    }
}

inline int cmd_infer(const PipelineConfig& cfg) {
    try {
        detail::ensure_out_dir(cfg);
        if (cfg.mode != "fixed" && cfg.mode != "adaptive")
            throw input_error("infer: mode must be 'fixed' or 'adaptive'");
        const model::Checkpoint ckpt = model::load_checkpoint(cfg.checkpoint_path());
        const auto rows = cemoflow::read_cemoflow_csv(cfg.cemoflow_csv_path());
        const auto ranges = cemoflow::read_segment_index(cfg.segment_index_path());

        const cemoflow::SegmentRange* range = nullptr;
        for (const auto& r : ranges)
            if (r.conversation_id == cfg.segment_id) range = &r;
        if (!range) throw input_error("infer: unknown segment '" + cfg.segment_id + "'");

        std::vector<cemoflow::SegmentRange> one = {*range};
        const auto dataset =
            to_training_segments(rows, one, ckpt.cfg.lagged_emotion_inputs, true);
        const auto& samples = dataset.front();

        const model::IntegrationMode mode = cfg.mode == "fixed"
                                                ? model::IntegrationMode::fixed_rk4
                                                : model::IntegrationMode::adaptive_dopri5;
        const std::vector<double> h0(static_cast<std::size_t>(ckpt.params.d), 0.0);
        const model::ForwardResult fwd =
            model::forward_trajectory(ckpt.params, samples, mode, h0, cfg.solver);

        const std::string pred_path =
            cfg.out_dir + "/predictions_" + cfg.segment_id + "_" + cfg.mode + ".csv";
        std::ofstream out(pred_path, std::ios::binary);
        if (!out) throw input_error("cannot write " + pred_path);
        out << "t,e0,e1,e2,e3,e4,e5\n";
        for (std::size_t i = 0; i < samples.size(); ++i) {
            out << csv::format_double(samples[i].t);
            for (std::size_t j = 0; j < kNumEmotions; ++j)
                out << "," << csv::format_double(fwd.predictions[i].e[j]);
            out << "\n";
        }
        nlohmann::ordered_json nj;
        nj["segment"] = cfg.segment_id;
        nj["mode"] = cfg.mode;
        nj["nfe"] = fwd.nfe;
        nj["rows"] = samples.size();
        detail::write_text(pred_path + ".nfe.json", nj.dump(2) + "\n");

        std::cout << "infer: segment " << cfg.segment_id << " mode " << cfg.mode << " nfe "
                  << fwd.nfe << " -> " << pred_path << "\n";
        return 0;
    } catch (const numeric_error& e) {
        std::cerr << "infer: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "infer: " << e.what() << "\n";
        return 2;
    }
}

inline int cmd_export_steering(const PipelineConfig& cfg) {
    try {
        detail::ensure_out_dir(cfg);
        if (cfg.anchors_path.empty()) throw input_error("export-steering: no anchors path");
        const steering::AnchorSet anchors = steering::AnchorSet::load_csv(cfg.anchors_path);
        const model::Checkpoint ckpt = model::load_checkpoint(cfg.checkpoint_path());
        const auto rows = cemoflow::read_cemoflow_csv(cfg.cemoflow_csv_path());
        const auto ranges = cemoflow::read_segment_index(cfg.segment_index_path());
        const model::IntegrationMode mode = cfg.mode == "fixed"
                                                ? model::IntegrationMode::fixed_rk4
                                                : model::IntegrationMode::adaptive_dopri5;

        std::vector<steering::ExportRecord> records;
        records.reserve(rows.size());
        const std::vector<double> h0(static_cast<std::size_t>(ckpt.params.d), 0.0);
        for (const auto& range : ranges) {
            std::vector<cemoflow::SegmentRange> one = {range};
            const auto dataset = to_training_segments(rows, one, ckpt.cfg.lagged_emotion_inputs, true);
            const auto& samples = dataset.front();
            const model::ForwardResult fwd =
                model::forward_trajectory(ckpt.params, samples, mode, h0, cfg.solver);
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const std::vector<double> dh =
                    model::dynamics(ckpt.params, samples[i].t, fwd.states[i], samples[i].features);
                double dh_norm = 0.0;
                for (double v : dh) dh_norm += v * v;
                dh_norm = std::sqrt(dh_norm);
                const steering::SteeringVector sv =
                    steering::build_steering(fwd.predictions[i], dh_norm, anchors, cfg.lambda_base);
                steering::ExportRecord rec;
                rec.t = rows[range.first_row + i].t_tilde();
                rec.u = sv.u;
                rec.lambda = sv.strength;
                rec.emotions = fwd.predictions[i];
                records.push_back(std::move(rec));
            }
        }
        steering::write_steering_jsonl(cfg.steering_path(), records);
        std::cout << "export-steering: " << records.size() << " records -> "
                  << cfg.steering_path() << "\n";
        return 0;
    } catch (const numeric_error& e) {
        std::cerr << "export-steering: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "export-steering: " << e.what() << "\n";
        return 2;
    }
}

// Emits (angle, value, delta) triples per emotion for external density
// plotting; angle is arctan2(sin_h, cos_h). Subsampling is seeded and
// deterministic, and never oversamples.
inline int cmd_plotdata(const PipelineConfig& cfg) {
    try {
        detail::ensure_out_dir(cfg);
        const auto rows = cemoflow::read_cemoflow_csv(cfg.cemoflow_csv_path());
        if (rows.empty()) throw input_error("plotdata: dataset is empty");

        std::vector<std::size_t> indices(rows.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        const std::size_t want = std::min<std::size_t>(
            rows.size(), cfg.plot_samples < 0 ? 0 : static_cast<std::size_t>(cfg.plot_samples));
        if (want < rows.size()) {
            SplitMix64 rng(derive_seed(cfg.seed, "plotdata"));
            for (std::size_t i = 0; i < want; ++i) {
                const std::size_t j = i + rng.below(indices.size() - i);
                std::swap(indices[i], indices[j]);
            }
            indices.resize(want);
            std::sort(indices.begin(), indices.end());
        }

        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            const std::string path =
                cfg.out_dir + "/plotdata_" + kEmotionLabels[j] + ".csv";
            std::ofstream out(path, std::ios::binary);
            if (!out) throw input_error("cannot write " + path);
            out << "angle,value,delta\n";
            for (std::size_t idx : indices) {
                const auto& row = rows[idx];
                const double angle = temporal::arctan2_recombine(row.sin_h(), row.cos_h());
                out << csv::format_double(angle) << "," << csv::format_double(row.emotion(j))
                    << "," << csv::format_double(row.delta()) << "\n";
            }
        }
        std::cout << "plotdata: " << indices.size() << " samples per emotion -> " << cfg.out_dir
                  << "/plotdata_<label>.csv\n";
        return 0;
    } catch (const numeric_error& e) {
        std::cerr << "plotdata: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "plotdata: " << e.what() << "\n";
        return 2;
    }
}

inline int cmd_stats(const PipelineConfig& cfg) {
    try {
        detail::ensure_out_dir(cfg);
        const auto rows = cemoflow::read_cemoflow_csv(cfg.cemoflow_csv_path());
        if (rows.empty()) throw input_error("stats: dataset is empty");
        const auto stats = cemoflow::summary_stats(rows);
        const std::string text = cemoflow::stats_to_json(stats).dump(2) + "\n";
        detail::write_text(cfg.stats_path(), text);
        std::cout << text;
        return 0;
    } catch (const numeric_error& e) {
        std::cerr << "stats: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "stats: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace affectflow::cli
