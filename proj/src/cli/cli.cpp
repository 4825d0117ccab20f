#include "semdec/cli/cli.hpp"

#include "semdec/io/checksum.hpp"
#include "semdec/pipeline/pipeline.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <fstream>
#include <optional>
#include <ostream>

namespace semdec::cli {

namespace fs = std::filesystem;
using io::Json;
using pipeline::RunConfig;

namespace {

// Paths and switches of one command; together with the resolved RunConfig
// they are written as the run snapshot and are enough to replay the command.
struct Options {
    std::string command;
    std::string out;
    std::string dataset;
    std::string checkpoint;
    std::string model = "cwer";
    bool truth = false;
    std::string decoded;
    std::string report;
    std::string scorer = "builtin";
    std::string import_scores;
    std::string export_scores;
    std::string plot;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Options, command, out, dataset, checkpoint, model, truth, decoded,
                                                report, scorer, import_scores, export_scores, plot)

struct Context {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;
};

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text))
        throw DataError("cannot write " + path.string());
}

void write_snapshot(const fs::path& path, const Options& o, const RunConfig& cfg)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    io::write_json(path, Json{{"options", o}, {"config", pipeline::to_json(cfg)}});
}

fs::path with_suffix(const fs::path& p, const std::string& suffix)
{
    return fs::path(p.string() + suffix);
}

Json input_checksums(const Options& o)
{
    Json in = Json::object();
    if (!o.dataset.empty())
        in["dataset"] = io::sha256_file(fs::path(o.dataset) / synth::dataset_manifest_name);
    if (!o.checkpoint.empty() && !o.truth)
        in["checkpoint"] = io::sha256_file(o.checkpoint);
    return in;
}

// Reconstructions of the test recordings from a checkpoint, or the true
// embedding series when `truth` is set.
std::vector<EmbeddingSeries> test_reconstructions(const Options& o, const pipeline::Prepared& data)
{
    std::vector<EmbeddingSeries> out;
    if (o.truth) {
        for (int r : data.test)
            out.push_back(data.all.targets[static_cast<std::size_t>(data.all.stimulus[static_cast<std::size_t>(r)])]);
        return out;
    }
    if (o.checkpoint.empty())
        throw ConfigError("checkpoint: required unless --truth is given");
    const auto model = pipeline::load_model(o.checkpoint);
    for (int r : data.test) {
        const auto i = static_cast<std::size_t>(r);
        out.push_back(pipeline::reconstruct(model, data.all.meg[i], data.all.subject[i]));
    }
    return out;
}

void cmd_synth(const Options& o, const RunConfig& cfg, Context& ctx)
{
    const auto d = synth::make_dataset(cfg.synth);
    const auto manifest = synth::write_dataset(d, o.out);
    write_snapshot(fs::path(o.out) / "run.json", o, cfg);
    for (const auto& w : d.warnings)
        ctx.err << "warning: " << w << '\n';
    ctx.out << manifest.string() << '\n';
}

void cmd_train(const Options& o, const RunConfig& cfg, Context& ctx)
{
    const auto kind = pipeline::parse_model_kind(o.model);
    const auto d = synth::load_dataset(o.dataset);
    const auto data = pipeline::prepare(d, cfg);
    auto log = [&](const cwer::EpochRecord& e) {
        if (!ctx.quiet)
            ctx.err << "net " << e.net << " epoch " << e.epoch << " train " << e.train_loss << " heldout "
                    << e.heldout_loss << '\n';
    };
    auto outcome = pipeline::train_model(kind, data, cfg, log);
    if (fs::path(o.out).has_parent_path())
        fs::create_directories(fs::path(o.out).parent_path());
    pipeline::save_model(o.out, outcome.model);
    auto report = outcome.report;
    report["inputs"] = input_checksums(o);
    report["checkpoint"] = io::sha256_file(o.out);
    io::write_json(with_suffix(o.out, ".train.json"), report);
    write_snapshot(with_suffix(o.out, ".run.json"), o, cfg);
    ctx.out << o.out << '\n';
}

void cmd_eval_segments(const Options& o, const RunConfig& cfg, Context& ctx)
{
    const auto d = synth::load_dataset(o.dataset);
    const auto data = pipeline::prepare(d, cfg);
    const auto results = pipeline::evaluate_segments(test_reconstructions(o, data), data, cfg.durations);
    Json report = {{"durations", pipeline::to_json(results)},
                   {"inputs", input_checksums(o)},
                   {"source", o.truth ? "truth" : "checkpoint"}};
    const auto text = pipeline::to_text(results);
    io::write_json(o.out, report);
    write_text(with_suffix(o.out, ".txt"), text);
    write_snapshot(with_suffix(o.out, ".run.json"), o, cfg);
    ctx.out << text;
}

void cmd_decode(const Options& o, const RunConfig& cfg, Context& ctx)
{
    const auto d = synth::load_dataset(o.dataset);
    const auto data = pipeline::prepare(d, cfg);
    const auto recon = test_reconstructions(o, data);
    const auto lm = pipeline::train_lm(d, cfg.lm_order);
    const auto trials = pipeline::decode_recordings(recon, d, data, lm, cfg.decoder);
    const auto nulls = pipeline::null_sequences(d, lm, cfg.decoder, cfg.nulls, cfg.seed);
    Json extra = {{"inputs", input_checksums(o)},
                  {"decoder", decoder::to_json(cfg.decoder)},
                  {"lm_order", cfg.lm_order},
                  {"nulls", cfg.nulls},
                  {"seed", cfg.seed}};
    pipeline::write_decoded_dir(o.out, trials, nulls, d, extra);
    write_snapshot(fs::path(o.out) / "run.json", o, cfg);
    int fallback = 0;
    for (const auto& t : trials)
        fallback += t.fallback_steps;
    if (fallback > 0)
        ctx.err << "warning: " << fallback << " decoding steps fell back to the most likely word\n";
    ctx.out << (fs::path(o.out) / "decoded.json").string() << '\n';
}

void write_plots(const fs::path& dir, const eval::SequenceReport& report)
{
    fs::create_directories(dir);
    for (const auto& t : report.trials)
        write_text(dir / (t.trial + ".svg"), eval::score_curve_svg(t, report.config));
}

void cmd_eval_sequence(const Options& o, const RunConfig& cfg, Context& ctx)
{
    const auto d = synth::load_dataset(o.dataset);
    const auto decoded = pipeline::read_decoded_dir(o.decoded, d);
    std::optional<std::map<std::string, std::vector<double>>> imported;
    if (!o.import_scores.empty())
        imported = eval::import_external_scores(o.import_scores, pipeline::expected_windows(decoded, d, cfg.eval),
                                                cfg.eval);
    const auto sims = pipeline::score_sequences(decoded, d, cfg.eval, imported ? &*imported : nullptr);
    const std::string scorer = imported && o.scorer == "builtin" ? "external" : o.scorer;
    const auto report = eval::summarize(sims, cfg.eval, scorer);
    if (!o.export_scores.empty())
        eval::export_scores(o.export_scores, pipeline::score_map(sims), cfg.eval);
    const auto text = eval::to_text(report);
    io::write_json(o.out, eval::to_json(report));
    write_text(with_suffix(o.out, ".txt"), text);
    if (!o.plot.empty())
        write_plots(o.plot, report);
    write_snapshot(with_suffix(o.out, ".run.json"), o, cfg);
    ctx.out << text;
}

void cmd_plot(const Options& o, Context& ctx)
{
    const auto report = eval::sequence_report_from_json(io::read_json(o.report));
    write_plots(o.out, report);
    ctx.out << report.trials.size() << " plots in " << o.out << '\n';
}

void dispatch(const Options& o, const RunConfig& cfg, Context& ctx)
{
    if (o.command == "synth")
        cmd_synth(o, cfg, ctx);
    else if (o.command == "train")
        cmd_train(o, cfg, ctx);
    else if (o.command == "eval-segments")
        cmd_eval_segments(o, cfg, ctx);
    else if (o.command == "decode")
        cmd_decode(o, cfg, ctx);
    else if (o.command == "eval-sequence")
        cmd_eval_sequence(o, cfg, ctx);
    else if (o.command == "plot")
        cmd_plot(o, ctx);
    else
        throw ConfigError("snapshot: unknown command '" + o.command + "'");
}

// Flags that override fields of the loaded configuration.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> subjects, channels, dim, trials;
    std::optional<double> alpha, snr_db;
    std::optional<std::string> nonlinearity;
    std::optional<double> lr;
    std::optional<int> batch, max_epochs;
    std::vector<double> durations;
    std::optional<int> nulls, beam;
    std::optional<double> top_p, top_r;
    bool raw_pvalues = false;
};

void apply(const Overrides& ov, const std::string& command, RunConfig& c)
{
    if (ov.seed) {
        c.seed = *ov.seed;
        if (command == "synth")
            c.synth.model.seed = *ov.seed;
    }
    if (ov.subjects)
        c.synth.model.subjects = *ov.subjects;
    if (ov.channels)
        c.synth.model.channels = *ov.channels;
    if (ov.dim)
        c.synth.model.dim = *ov.dim;
    if (ov.trials)
        c.synth.trials = *ov.trials;
    if (ov.alpha)
        c.synth.model.alpha = *ov.alpha;
    if (ov.snr_db)
        c.synth.model.snr_db = *ov.snr_db;
    if (ov.nonlinearity)
        c.synth.model.nonlinearity = synth::parse_nonlinearity(*ov.nonlinearity);
    if (ov.lr)
        c.train.lr = *ov.lr;
    if (ov.batch)
        c.train.batch = *ov.batch;
    if (ov.max_epochs)
        c.train.max_epochs = *ov.max_epochs;
    if (!ov.durations.empty())
        c.durations = ov.durations;
    if (ov.nulls)
        c.nulls = *ov.nulls;
    if (ov.beam)
        c.decoder.beam = *ov.beam;
    if (ov.top_p)
        c.decoder.top_p = *ov.top_p;
    if (ov.top_r)
        c.decoder.top_r = *ov.top_r;
    if (ov.raw_pvalues)
        c.eval.raw_pvalues = true;
    c.validate();
}

// A configuration file that cannot be parsed is a configuration error.
Json read_config(const std::string& path)
{
    try {
        return io::read_json(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

int guarded(Context& ctx, const std::function<void()>& body)
{
    try {
        body();
        return exit_ok;
    } catch (const ConfigError& e) {
        ctx.err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const cwer::TrainingError& e) {
        ctx.err << "training failed: " << e.what() << '\n';
        return exit_training;
    } catch (const DataError& e) {
        ctx.err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const Json::exception& e) {
        ctx.err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const fs::filesystem_error& e) {
        ctx.err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        ctx.err << "error: " << e.what() << '\n';
        return exit_data;
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Semantic decoding from neural recordings: synthesis, training, decoding and evaluation", "semdec"};
    app.require_subcommand(1);

    Options o;
    Overrides ov;
    std::string config_path;
    std::string snapshot_path;
    int threads = 0;
    Context ctx{out, err};

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", ov.seed, "Global seed");
        sub->add_option("--threads", threads, "Worker thread cap; results do not depend on it")
            ->check(CLI::NonNegativeNumber);
        sub->add_flag("--quiet", ctx.quiet, "Suppress progress output");
    };

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    common(synth_cmd);
    synth_cmd->add_option("--out", o.out, "Dataset directory (created if missing)")->required();
    synth_cmd->add_option("--subjects", ov.subjects, "Number of subjects");
    synth_cmd->add_option("--channels", ov.channels, "Sensor channels");
    synth_cmd->add_option("--dim", ov.dim, "Embedding dimension");
    synth_cmd->add_option("--trials", ov.trials, "Number of stimuli");
    synth_cmd->add_option("--alpha", ov.alpha, "Weight of the mixing shared by all subjects");
    synth_cmd->add_option("--snr-db", ov.snr_db, "Signal-to-noise ratio in dB");
    synth_cmd->add_option("--nonlinearity", ov.nonlinearity, "none or tanh");

    auto* train_cmd = app.add_subcommand("train", "Train a reconstruction model");
    common(train_cmd);
    train_cmd->add_option("--dataset", o.dataset, "Dataset directory")->required();
    train_cmd->add_option("--model", o.model, "cwer, cwer-nosubject, cwer-persubject or ridge");
    train_cmd->add_option("--out", o.out, "Checkpoint path")->required();
    train_cmd->add_option("--lr", ov.lr, "Adam learning rate (default 5e-5)");
    train_cmd->add_option("--batch", ov.batch, "Minibatch size");
    train_cmd->add_option("--max-epochs", ov.max_epochs, "Epoch limit");

    auto* seg_cmd = app.add_subcommand("eval-segments", "Segment retrieval on the test recordings");
    common(seg_cmd);
    seg_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
    seg_cmd->add_flag("--truth", o.truth, "Use the true embedding series as reconstructions");
    seg_cmd->add_option("--dataset", o.dataset, "Dataset directory")->required();
    seg_cmd->add_option("--out", o.out, "Report path (JSON; text alongside)")->required();
    seg_cmd->add_option("--durations", ov.durations, "Segment durations in seconds")->delimiter(',');

    auto* dec_cmd = app.add_subcommand("decode", "Decode test recordings and draw null sequences");
    common(dec_cmd);
    dec_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
    dec_cmd->add_flag("--truth", o.truth, "Decode from the true embedding series");
    dec_cmd->add_option("--dataset", o.dataset, "Dataset directory")->required();
    dec_cmd->add_option("--out", o.out, "Output directory")->required();
    dec_cmd->add_option("--nulls", ov.nulls, "Null sequences per stimulus (default 500)");
    dec_cmd->add_option("--beam", ov.beam, "Beam width");
    dec_cmd->add_option("--top-p", ov.top_p, "Nucleus mass");
    dec_cmd->add_option("--top-r", ov.top_r, "Ratio to the most likely word");

    auto* seq_cmd = app.add_subcommand("eval-sequence", "Window and trial similarity with permutation tests");
    common(seq_cmd);
    seq_cmd->add_option("--decoded", o.decoded, "Directory written by decode")->required();
    seq_cmd->add_option("--dataset", o.dataset, "Dataset directory")->required();
    seq_cmd->add_option("--out", o.out, "Report path (JSON; text alongside)")->required();
    seq_cmd->add_option("--scorer", o.scorer, "Scorer name recorded in the report");
    seq_cmd->add_option("--import-scores", o.import_scores, "TSV of external window scores")
        ->check(CLI::ExistingFile);
    seq_cmd->add_option("--export-scores", o.export_scores, "Write window scores as TSV");
    seq_cmd->add_option("--plot", o.plot, "Directory for per-trial score curves (SVG)");
    seq_cmd->add_flag("--raw-pvalues", ov.raw_pvalues, "Use #{null >= real} / n");

    auto* plot_cmd = app.add_subcommand("plot", "Score curves from a sequence report");
    plot_cmd->add_option("--report", o.report, "Sequence report (JSON)")->required()->check(CLI::ExistingFile);
    plot_cmd->add_option("--out", o.out, "Output directory")->required();

    auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its run snapshot");
    replay_cmd->add_option("snapshot", snapshot_path, "Snapshot written by a previous run")
        ->required()
        ->check(CLI::ExistingFile);
    replay_cmd->add_option("--threads", threads, "Worker thread cap")->check(CLI::NonNegativeNumber);
    replay_cmd->add_flag("--quiet", ctx.quiet, "Suppress progress output");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    }

    if (threads > 0)
        Eigen::setNbThreads(threads);

    return guarded(ctx, [&] {
        if (replay_cmd->parsed()) {
            const Json snap = read_config(snapshot_path);
            Options so;
            RunConfig cfg;
            try {
                so = snap.at("options").get<Options>();
                cfg = pipeline::run_config_from_json(snap.at("config"));
            } catch (const Json::exception& e) {
                throw ConfigError("snapshot " + snapshot_path + ": " + e.what());
            }
            dispatch(so, cfg, ctx);
            return;
        }
        o.command = app.get_subcommands().front()->get_name();
        RunConfig cfg;
        if (!config_path.empty())
            cfg = pipeline::run_config_from_json(read_config(config_path));
        apply(ov, o.command, cfg);
        dispatch(o, cfg, ctx);
    });
}

} // namespace semdec::cli
