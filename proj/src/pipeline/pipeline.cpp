#include "semdec/pipeline/pipeline.hpp"

#include "semdec/io/checksum.hpp"
#include "semdec/io/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace semdec::pipeline {

namespace fs = std::filesystem;

std::string to_string(ModelKind k)
{
    switch (k) {
    case ModelKind::cwer:
        return "cwer";
    case ModelKind::cwer_nosubject:
        return "cwer-nosubject";
    case ModelKind::cwer_persubject:
        return "cwer-persubject";
    case ModelKind::ridge:
        return "ridge";
    }
    return "cwer";
}

ModelKind parse_model_kind(const std::string& name)
{
    for (auto k : {ModelKind::cwer, ModelKind::cwer_nosubject, ModelKind::cwer_persubject, ModelKind::ridge})
        if (to_string(k) == name)
            return k;
    throw ConfigError("model: unknown kind '" + name + "' (cwer, cwer-nosubject, cwer-persubject, ridge)");
}

void RunConfig::validate() const
{
    synth.validate();
    if (!(preprocess.lowpass_hz > 0.0) || !(preprocess.target_rate > 0.0) || !(preprocess.broadband_low_hz > 0.0) ||
        !(preprocess.broadband_high_hz > preprocess.broadband_low_hz))
        throw ConfigError("preprocess: cut-offs and target rate must be positive with low < high");
    if (preprocess.lowpass_hz >= preprocess.target_rate / 2.0)
        throw ConfigError("preprocess.lowpass_hz: must lie below half the target rate");
    auto probe = cwer;
    probe.channels = 1;
    probe.dim = 2;
    probe.validate();
    train.validate();
    ridge.validate();
    decoder.validate();
    eval.validate();
    if (lm_order < 1)
        throw ConfigError("pipeline.lm_order: must be >= 1");
    if (!(shift_s >= 0.0))
        throw ConfigError("pipeline.shift_s: must be >= 0");
    if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0))
        throw ConfigError("pipeline.heldout_fraction: must lie in (0, 1)");
    if (durations.empty())
        throw ConfigError("pipeline.durations: need at least one duration");
    for (double d : durations)
        if (!(d > 0.0))
            throw ConfigError("pipeline.durations: durations must be > 0");
    if (nulls < 0)
        throw ConfigError("pipeline.nulls: must be >= 0");
}

io::Json to_json(const RunConfig& c)
{
    io::Json pre = {{"broadband_low_hz", c.preprocess.broadband_low_hz},
                    {"broadband_high_hz", c.preprocess.broadband_high_hz},
                    {"lowpass_hz", c.preprocess.lowpass_hz},
                    {"target_rate", c.preprocess.target_rate}};
    io::Json net = {{"hidden", c.cwer.hidden},
                    {"head_hidden", c.cwer.head_hidden},
                    {"blocks", c.cwer.blocks},
                    {"kernel", c.cwer.kernel},
                    {"dropout", c.cwer.dropout}};
    io::Json pipe = {{"lm_order", c.lm_order},
                     {"shift_s", c.shift_s},
                     {"heldout_fraction", c.heldout_fraction},
                     {"durations", c.durations},
                     {"nulls", c.nulls}};
    return {{"synth", synth::to_json(c.synth)},
            {"preprocess", pre},
            {"cwer", net},
            {"train", cwer::to_json(c.train)},
            {"ridge", ridge::to_json(c.ridge)},
            {"decoder", decoder::to_json(c.decoder)},
            {"eval", eval::to_json(c.eval)},
            {"pipeline", pipe},
            {"seed", c.seed}};
}

RunConfig run_config_from_json(const io::Json& j)
{
    io::reject_unknown_keys(j, {"synth", "preprocess", "cwer", "train", "ridge", "decoder", "eval", "pipeline", "seed"},
                            "config");
    RunConfig c;
    if (auto it = j.find("synth"); it != j.end())
        c.synth = synth::dataset_config_from_json(*it);
    if (auto it = j.find("preprocess"); it != j.end()) {
        const std::string sec = "preprocess";
        io::reject_unknown_keys(*it, {"broadband_low_hz", "broadband_high_hz", "lowpass_hz", "target_rate"}, sec);
        io::read_field(*it, "broadband_low_hz", c.preprocess.broadband_low_hz, sec);
        io::read_field(*it, "broadband_high_hz", c.preprocess.broadband_high_hz, sec);
        io::read_field(*it, "lowpass_hz", c.preprocess.lowpass_hz, sec);
        io::read_field(*it, "target_rate", c.preprocess.target_rate, sec);
    }
    if (auto it = j.find("cwer"); it != j.end()) {
        io::reject_unknown_keys(*it, {"hidden", "head_hidden", "blocks", "kernel", "dropout"}, "cwer");
        c.cwer = cwer::cwer_config_from_json(*it);
    }
    if (auto it = j.find("train"); it != j.end())
        c.train = cwer::train_config_from_json(*it);
    if (auto it = j.find("ridge"); it != j.end())
        c.ridge = ridge::ridge_config_from_json(*it);
    if (auto it = j.find("decoder"); it != j.end())
        c.decoder = decoder::decoder_config_from_json(*it);
    if (auto it = j.find("eval"); it != j.end())
        c.eval = eval::window_config_from_json(*it);
    if (auto it = j.find("pipeline"); it != j.end()) {
        const std::string sec = "pipeline";
        io::reject_unknown_keys(*it, {"lm_order", "shift_s", "heldout_fraction", "durations", "nulls"}, sec);
        io::read_field(*it, "shift_s", c.shift_s, sec);
        io::read_field(*it, "lm_order", c.lm_order, sec);
        io::read_field(*it, "heldout_fraction", c.heldout_fraction, sec);
        io::read_field(*it, "durations", c.durations, sec);
        io::read_field(*it, "nulls", c.nulls, sec);
    }
    io::read_field(j, "seed", c.seed, "config");
    c.validate();
    return c;
}

cwer::PairedData Prepared::subset(const std::vector<int>& recordings) const
{
    cwer::PairedData out;
    out.targets = all.targets;
    for (int r : recordings) {
        const auto i = static_cast<std::size_t>(r);
        out.meg.push_back(all.meg.at(i));
        out.subject.push_back(all.subject.at(i));
        out.stimulus.push_back(all.stimulus.at(i));
    }
    return out;
}

std::vector<int> heldout_stimuli(const synth::Dataset& d, double fraction)
{
    std::vector<int> train;
    for (const auto& s : d.stimuli)
        if (!s.test)
            train.push_back(s.id);
    if (train.size() < 2)
        throw DataError("dataset: need at least two training stimuli to hold one out");
    auto n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(train.size())));
    n = std::clamp<std::size_t>(n, 1, train.size() - 1);
    return {train.end() - static_cast<std::ptrdiff_t>(n), train.end()};
}

Prepared prepare(const synth::Dataset& d, const RunConfig& cfg)
{
    if (d.recordings.empty())
        throw DataError("dataset: no recordings");
    Prepared p;
    const auto held = heldout_stimuli(d, cfg.heldout_fraction);
    const std::set<int> held_set(held.begin(), held.end());
    std::vector<EmbeddingSeries> full;
    for (const auto& s : d.stimuli)
        full.push_back(stimulus_target(s, cfg.preprocess.target_rate));
    std::vector<Index> usable(full.size(), -1);
    for (std::size_t r = 0; r < d.recordings.size(); ++r) {
        const auto& rec = d.recordings[r];
        const auto s = static_cast<std::size_t>(rec.stimulus);
        auto aligned = shift_align(preprocess_meg(rec.meg, cfg.preprocess).series, full.at(s), cfg.shift_s);
        usable[s] = usable[s] < 0 ? aligned.meg.samples() : std::min(usable[s], aligned.meg.samples());
        p.all.meg.push_back(std::move(aligned.meg));
        p.all.subject.push_back(rec.subject);
        p.all.stimulus.push_back(rec.stimulus);
        const int idx = static_cast<int>(r);
        if (d.stimulus(rec.stimulus).test)
            p.test.push_back(idx);
        else if (held_set.count(rec.stimulus))
            p.heldout.push_back(idx);
        else
            p.train.push_back(idx);
    }
    for (std::size_t s = 0; s < full.size(); ++s) {
        if (usable[s] > 0)
            full[s].data.conservativeResize(Eigen::NoChange, usable[s]);
        p.all.targets.push_back(std::move(full[s]));
    }
    p.all.validate();
    if (p.test.empty())
        throw DataError("dataset: no test recordings");
    return p;
}

namespace {

cwer::CwerConfig model_config(ModelKind kind, const Prepared& data, const RunConfig& cfg)
{
    cwer::CwerConfig m = cfg.cwer;
    m.channels = static_cast<int>(data.all.meg.front().channels());
    m.dim = static_cast<int>(data.all.targets.front().channels());
    m.subjects = *std::max_element(data.all.subject.begin(), data.all.subject.end()) + 1;
    m.mode = kind == ModelKind::cwer_nosubject    ? cwer::SubjectMode::no_subject_layer
             : kind == ModelKind::cwer_persubject ? cwer::SubjectMode::per_subject
                                                  : cwer::SubjectMode::subject_layer;
    m.validate();
    return m;
}

// Signal and target cut to their common length.
std::pair<TimeSeries, EmbeddingSeries> aligned(const Prepared& data, int r)
{
    const auto i = static_cast<std::size_t>(r);
    TimeSeries x = data.all.meg[i];
    EmbeddingSeries z = data.all.targets[static_cast<std::size_t>(data.all.stimulus[i])];
    const Index n = std::min(x.samples(), z.samples());
    x.data.conservativeResize(Eigen::NoChange, n);
    z.data.conservativeResize(Eigen::NoChange, n);
    return {std::move(x), std::move(z)};
}

} // namespace

TrainOutcome train_model(ModelKind kind, const Prepared& data, const RunConfig& cfg,
                         const cwer::EpochCallback& on_epoch)
{
    if (kind == ModelKind::ridge) {
        std::vector<TimeSeries> x;
        std::vector<EmbeddingSeries> z;
        std::vector<int> groups;
        std::vector<int> recs = data.train;
        recs.insert(recs.end(), data.heldout.begin(), data.heldout.end());
        std::sort(recs.begin(), recs.end());
        for (int r : recs) {
            auto [xr, zr] = aligned(data, r);
            x.push_back(std::move(xr));
            z.push_back(std::move(zr));
            groups.push_back(data.all.stimulus[static_cast<std::size_t>(r)]);
        }
        auto fit = ridge::train_ridge(x, z, groups, cfg.ridge);
        io::Json report = {{"model", "ridge"},
                           {"lambdas", cfg.ridge.lambdas},
                           {"cv_scores", fit.cv.scores},
                           {"best_lambda", fit.cv.best_lambda},
                           {"fold_trials", fit.cv.fold_trials}};
        return {std::move(fit.model), std::move(report)};
    }
    const auto mcfg = model_config(kind, data, cfg);
    auto tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    auto result = cwer::train(mcfg, data.subset(data.train), data.subset(data.heldout), tcfg, on_epoch);
    io::Json history = io::Json::array();
    for (const auto& e : result.history)
        history.push_back(
            {{"net", e.net}, {"epoch", e.epoch}, {"train_loss", e.train_loss}, {"heldout_loss", e.heldout_loss}});
    io::Json report = {{"model", to_string(kind)}, {"history", history}, {"best_epoch", result.best_epoch}};
    return {std::move(result.model), std::move(report)};
}

EmbeddingSeries reconstruct(const Model& m, const TimeSeries& meg, int subject)
{
    if (const auto* c = std::get_if<cwer::CwerModel>(&m))
        return cwer::reconstruct(*c, meg, subject);
    return ridge::ridge_predict(std::get<ridge::RidgeModel>(m), meg);
}

void save_model(const fs::path& path, const Model& m)
{
    if (const auto* c = std::get_if<cwer::CwerModel>(&m))
        cwer::save_model(path, *c);
    else
        ridge::save_ridge(path, std::get<ridge::RidgeModel>(m));
}

Model load_model(const fs::path& path)
{
    const auto ck = io::load_checkpoint(path);
    if (ck.kind == "RIDG")
        return ridge::from_checkpoint(ck);
    return cwer::from_checkpoint(ck);
}

namespace {

std::vector<EmbeddingSeries> reconstruct_test(const Model& m, const Prepared& data)
{
    std::vector<EmbeddingSeries> out;
    for (int r : data.test) {
        const auto i = static_cast<std::size_t>(r);
        out.push_back(reconstruct(m, data.all.meg[i], data.all.subject[i]));
    }
    return out;
}

} // namespace

std::vector<DurationResult> evaluate_segments(const Model& m, const Prepared& data,
                                              const std::vector<double>& durations)
{
    return evaluate_segments(reconstruct_test(m, data), data, durations);
}

std::vector<DurationResult> evaluate_segments(const std::vector<EmbeddingSeries>& reconstructions,
                                              const Prepared& data, const std::vector<double>& durations)
{
    if (reconstructions.size() != data.test.size())
        throw ShapeError("segment evaluation: " + std::to_string(reconstructions.size()) + " reconstructions for " +
                         std::to_string(data.test.size()) + " test recordings");
    std::vector<DurationResult> results;
    for (double dur : durations) {
        std::map<std::pair<int, Index>, int> cand_index;
        std::vector<MatrixF> candidates;
        std::vector<MatrixF> recon;
        std::vector<int> target;
        for (std::size_t k = 0; k < data.test.size(); ++k) {
            const auto i = static_cast<std::size_t>(data.test[k]);
            const int stim = data.all.stimulus[i];
            const auto& z = data.all.targets[static_cast<std::size_t>(stim)];
            const auto& zhat = reconstructions[k];
            if (zhat.channels() != z.channels())
                throw ShapeError("segment evaluation: reconstruction has " + std::to_string(zhat.channels()) +
                                 " dimensions, targets have " + std::to_string(z.channels()));
            if (zhat.sample_rate != z.sample_rate)
                throw ShapeError("segment evaluation: reconstruction and target rates differ");
            const Index len = std::min(zhat.samples(), z.samples());
            const auto plan = plan_segments(len, z.sample_rate, dur, 0.0);
            for (Index start : plan.starts) {
                auto [it, added] = cand_index.try_emplace({stim, start}, static_cast<int>(candidates.size()));
                if (added)
                    candidates.emplace_back(z.data.middleCols(start, plan.window));
                recon.emplace_back(zhat.data.middleCols(start, plan.window));
                target.push_back(it->second);
            }
        }
        if (candidates.size() < 2)
            throw DataError("segment evaluation: fewer than two " + io::format_double(dur) + " s segments");
        const auto summary = eval::segment_retrieval(recon, target, candidates);
        DurationResult d;
        d.duration_s = dur;
        d.segments = recon.size();
        d.candidates = candidates.size();
        d.top10 = 100.0 * summary.top10_accuracy;
        d.rank_accuracy = 100.0 * summary.rank_accuracy;
        d.chance_top10 = 100.0 * std::min(1.0, 10.0 / static_cast<double>(candidates.size()));
        results.push_back(d);
    }
    return results;
}

io::Json to_json(const std::vector<DurationResult>& r)
{
    io::Json out = io::Json::array();
    for (const auto& d : r)
        out.push_back({{"duration_s", d.duration_s},
                       {"segments", d.segments},
                       {"candidates", d.candidates},
                       {"top10", d.top10},
                       {"rank_accuracy", d.rank_accuracy},
                       {"chance_top10", d.chance_top10}});
    return out;
}

std::string to_text(const std::vector<DurationResult>& r)
{
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %10s %10s\n", "duration", "segments", "candidates",
                  "top10%", "rank%", "chance%");
    out += line;
    for (const auto& d : r) {
        std::snprintf(line, sizeof line, "%-10s %10zu %10zu %10.1f %10.1f %10.1f\n",
                      (io::format_double(d.duration_s) + " s").c_str(), d.segments, d.candidates, d.top10,
                      d.rank_accuracy, d.chance_top10);
        out += line;
    }
    return out;
}

NgramLm train_lm(const synth::Dataset& d, int order)
{
    return NgramLm::train(synth::training_ids(d), order, d.vocab.size());
}

std::string recording_name(int subject, int stimulus)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "sub%02d_stim%03d", subject, stimulus);
    return buf;
}

std::string stimulus_name(int stimulus)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "stim%03d", stimulus);
    return buf;
}

std::vector<DecodedTrial> decode_recordings(const std::vector<EmbeddingSeries>& reconstructions,
                                            const synth::Dataset& d, const Prepared& data, const NgramLm& lm,
                                            const decoder::DecoderConfig& cfg)
{
    if (reconstructions.size() != data.test.size())
        throw ShapeError("decode: reconstruction count does not match the test recordings");
    if (lm.vocab_size() != d.vocab.size())
        throw ShapeError("decode: language model and vocabulary sizes differ");
    decoder::BeamSearch search(lm, cfg);
    std::vector<DecodedTrial> out;
    for (std::size_t k = 0; k < data.test.size(); ++k) {
        const auto i = static_cast<std::size_t>(data.test[k]);
        const auto& stim = d.stimulus(data.all.stimulus[i]);
        const auto timings = decoder::timings_of(stim.words);
        const auto res = decoder::decode_trial(search, reconstructions[k], timings, d.table);
        DecodedTrial t;
        t.subject = data.all.subject[i];
        t.stimulus = stim.id;
        t.name = recording_name(t.subject, t.stimulus);
        t.fallback_steps = res.fallback_steps;
        for (std::size_t w = 0; w < res.words.size(); ++w)
            t.words.push_back({d.vocab.token(res.words[w]), timings[w].t_on, timings[w].t_off, res.scores[w]});
        out.push_back(std::move(t));
    }
    return out;
}

std::map<int, std::vector<std::vector<std::string>>> null_sequences(const synth::Dataset& d, const NgramLm& lm,
                                                                    const decoder::DecoderConfig& cfg, int count,
                                                                    std::uint64_t seed)
{
    decoder::BeamSearch search(lm, cfg);
    std::map<int, std::vector<std::vector<std::string>>> out;
    for (const auto& s : d.stimuli) {
        if (!s.test)
            continue;
        const auto timings = decoder::timings_of(s.words);
        const auto stream = derive_rng(seed, {0x6e756c6cULL, static_cast<std::uint64_t>(s.id)})();
        auto& dst = out[s.id];
        for (const auto& ids : decoder::generate_null_sequences(search, timings, count, stream)) {
            std::vector<std::string> tokens;
            tokens.reserve(ids.size());
            for (int id : ids)
                tokens.push_back(d.vocab.token(id));
            dst.push_back(std::move(tokens));
        }
    }
    return out;
}

io::Json checksum_tree(const fs::path& dir)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            files.push_back(fs::relative(e.path(), dir));
    std::sort(files.begin(), files.end());
    io::Json out = io::Json::object();
    for (const auto& f : files)
        out[f.generic_string()] = io::sha256_file(dir / f);
    return out;
}

namespace {

constexpr const char* decoded_manifest = "decoded.json";

void write_nulls(const fs::path& path, const std::vector<std::vector<std::string>>& nulls,
                 const std::vector<WordAnnotation>& words)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    for (std::size_t k = 0; k < nulls.size(); ++k)
        for (std::size_t w = 0; w < nulls[k].size(); ++w)
            out << k << '\t' << nulls[k][w] << '\t' << io::format_double(words[w].t_on) << '\t'
                << io::format_double(words[w].t_off) << '\n';
    if (!out)
        throw DataError("write failed: " + path.string());
}

std::vector<std::vector<std::string>> read_nulls(const fs::path& path, std::size_t words)
{
    std::vector<std::vector<std::string>> out;
    io::for_each_tsv_row(path, [&](const std::vector<std::string_view>& f, const std::string& where) {
        if (f.size() != 4)
            throw DataError(where + ": expected 4 columns");
        const double k = io::parse_double(f[0], where);
        if (!(k >= 0.0) || k != std::floor(k))
            throw DataError(where + ": bad null index");
        const auto idx = static_cast<std::size_t>(k);
        if (idx != out.size() && idx + 1 != out.size())
            throw DataError(where + ": null indices must be consecutive");
        if (idx == out.size())
            out.emplace_back();
        out.back().emplace_back(f[1]);
    });
    for (std::size_t k = 0; k < out.size(); ++k)
        if (out[k].size() != words)
            throw DataError(path.string() + ": null " + std::to_string(k) + " has " + std::to_string(out[k].size()) +
                            " words, the stimulus has " + std::to_string(words));
    return out;
}

} // namespace

void write_decoded_dir(const fs::path& dir, const std::vector<DecodedTrial>& trials,
                       const std::map<int, std::vector<std::vector<std::string>>>& nulls, const synth::Dataset& d,
                       const io::Json& manifest_extra)
{
    fs::create_directories(dir / "decoded");
    fs::create_directories(dir / "nulls");
    io::Json list = io::Json::array();
    for (const auto& t : trials) {
        decoder::write_decoded(dir / "decoded" / (t.name + ".tsv"), t.words);
        list.push_back({{"name", t.name},
                        {"subject", t.subject},
                        {"stimulus", t.stimulus},
                        {"fallback_steps", t.fallback_steps}});
    }
    for (const auto& [s, seqs] : nulls)
        write_nulls(dir / "nulls" / (stimulus_name(s) + ".tsv"), seqs, d.stimulus(s).words);
    io::Json files = io::Json::object();
    for (const char* sub : {"decoded", "nulls"}) {
        const auto sums = checksum_tree(dir / sub);
        for (const auto& [k, v] : sums.items())
            files[std::string(sub) + "/" + k] = v;
    }
    io::Json manifest = manifest_extra;
    manifest["trials"] = list;
    manifest["files"] = files;
    io::write_json(dir / decoded_manifest, manifest);
}

DecodedDir read_decoded_dir(const fs::path& dir, const synth::Dataset& d)
{
    const auto manifest_path = dir / decoded_manifest;
    if (!fs::exists(manifest_path))
        throw DataError("decoded directory has no " + std::string(decoded_manifest) + ": " + dir.string());
    const auto manifest = io::read_json(manifest_path);
    try {
        for (const auto& [rel, sum] : manifest.at("files").items())
            if (io::sha256_file(dir / rel) != sum.get<std::string>())
                throw DataError("checksum mismatch: " + (dir / rel).string());
        DecodedDir out;
        std::set<int> stimuli;
        for (const auto& t : manifest.at("trials")) {
            DecodedTrial tr;
            tr.name = t.at("name").get<std::string>();
            tr.subject = t.at("subject").get<int>();
            tr.stimulus = t.at("stimulus").get<int>();
            tr.fallback_steps = t.at("fallback_steps").get<int>();
            if (tr.stimulus < 0 || static_cast<std::size_t>(tr.stimulus) >= d.stimuli.size())
                throw DataError("decoded trial " + tr.name + " refers to a missing stimulus");
            tr.words = decoder::read_decoded(dir / "decoded" / (tr.name + ".tsv"));
            if (tr.words.size() != d.stimulus(tr.stimulus).words.size())
                throw ShapeError("decoded trial " + tr.name + " has " + std::to_string(tr.words.size()) +
                                 " words, the stimulus has " + std::to_string(d.stimulus(tr.stimulus).words.size()));
            stimuli.insert(tr.stimulus);
            out.trials.push_back(std::move(tr));
        }
        for (int s : stimuli) {
            const auto p = dir / "nulls" / (stimulus_name(s) + ".tsv");
            out.nulls[s] = fs::exists(p) ? read_nulls(p, d.stimulus(s).words.size())
                                         : std::vector<std::vector<std::string>>{};
        }
        return out;
    } catch (const io::Json::exception& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
}

namespace {

std::vector<WordAnnotation> with_timing(const std::vector<std::string>& tokens, const std::vector<WordAnnotation>& ref)
{
    std::vector<WordAnnotation> out(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
        out[i] = {tokens[i], ref[i].t_on, ref[i].t_off};
    return out;
}

const std::vector<double>& imported_row(const std::map<std::string, std::vector<double>>& scores,
                                        const std::string& id)
{
    auto it = scores.find(id);
    if (it == scores.end())
        throw DataError("imported scores lack trial " + id);
    return it->second;
}

} // namespace

std::vector<eval::TrialSimilarity> score_sequences(const DecodedDir& decoded, const synth::Dataset& d,
                                                   const eval::WindowConfig& cfg,
                                                   const std::map<std::string, std::vector<double>>* imported)
{
    const eval::TokenSimilarity sim(d.vocab, d.table);
    std::map<int, std::vector<std::vector<double>>> null_cache;
    std::vector<eval::TrialSimilarity> out;
    for (const auto& t : decoded.trials) {
        const auto& stim = d.stimulus(t.stimulus);
        eval::TrialSimilarity ts;
        ts.trial = t.name;
        ts.trial_len_s = stim.duration;
        const auto& nulls = decoded.nulls.at(t.stimulus);
        if (imported) {
            ts.window_scores = imported_row(*imported, t.name);
            for (std::size_t k = 0; k < nulls.size(); ++k)
                ts.null_window_scores.push_back(imported_row(*imported, t.name + "#null" + std::to_string(k)));
        } else {
            std::vector<WordAnnotation> pred;
            for (const auto& w : t.words)
                pred.push_back({w.token, w.t_on, w.t_off});
            ts.window_scores = eval::window_similarity(pred, stim.words, stim.duration, cfg, sim);
            auto [it, fresh] = null_cache.try_emplace(t.stimulus);
            if (fresh)
                for (const auto& seq : nulls)
                    it->second.push_back(
                        eval::window_similarity(with_timing(seq, stim.words), stim.words, stim.duration, cfg, sim));
            ts.null_window_scores = it->second;
        }
        out.push_back(std::move(ts));
    }
    return out;
}

std::map<std::string, Index> expected_windows(const DecodedDir& decoded, const synth::Dataset& d,
                                              const eval::WindowConfig& cfg)
{
    std::map<std::string, Index> out;
    for (const auto& t : decoded.trials) {
        const Index n = eval::window_count(d.stimulus(t.stimulus).duration, cfg);
        out[t.name] = n;
        for (std::size_t k = 0; k < decoded.nulls.at(t.stimulus).size(); ++k)
            out[t.name + "#null" + std::to_string(k)] = n;
    }
    return out;
}

std::map<std::string, std::vector<double>> score_map(const std::vector<eval::TrialSimilarity>& trials)
{
    std::map<std::string, std::vector<double>> out;
    for (const auto& t : trials) {
        out[t.trial] = t.window_scores;
        for (std::size_t k = 0; k < t.null_window_scores.size(); ++k)
            out[t.trial + "#null" + std::to_string(k)] = t.null_window_scores[k];
    }
    return out;
}

} // namespace semdec::pipeline
