#include "semdec/synth/dataset.hpp"

#include "semdec/io/checksum.hpp"
#include "semdec/io/nts1.hpp"
#include "semdec/sigproc/dsp.hpp"
#include "semdec/synth/text_source.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace semdec::synth {

namespace fs = std::filesystem;
using io::Json;

void DatasetConfig::validate() const
{
    model.validate();
    if (trials < 2)
        throw ConfigError("trials: must be >= 2");
    if (words_per_trial < 1)
        throw ConfigError("words_per_trial: must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction: must lie in (0, 1)");
    if (source_vocab < 2)
        throw ConfigError("source_vocab: must be >= 2");
    if (successors < 1 || successors >= source_vocab)
        throw ConfigError("successors: must lie in [1, source_vocab)");
    if (min_count < 1)
        throw ConfigError("min_count: must be >= 1");
    if (context_length < 1)
        throw ConfigError("context_length: must be >= 1");
    if (!(context_decay > 0.0 && context_decay <= 1.0))
        throw ConfigError("context_decay: must lie in (0, 1]");
}

Json to_json(const DatasetConfig& c)
{
    const auto& m = c.model;
    Json model{{"subjects", m.subjects},
               {"channels", m.channels},
               {"dim", m.dim},
               {"sample_rate", m.sample_rate},
               {"kernel_length_s", m.kernel_length_s},
               {"alpha", m.alpha},
               {"subject_scale", m.subject_scale},
               {"ar_coefficient", m.ar_coefficient},
               {"snr_db", io::number_or_inf(m.snr_db)},
               {"nonlinearity", to_string(m.nonlinearity)},
               {"nonlinearity_gain", m.nonlinearity_gain},
               {"seed", m.seed}};
    return Json{{"model", model},
                {"trials", c.trials},
                {"words_per_trial", c.words_per_trial},
                {"test_fraction", c.test_fraction},
                {"source_vocab", c.source_vocab},
                {"successors", c.successors},
                {"min_count", c.min_count},
                {"context_length", c.context_length},
                {"context_decay", c.context_decay}};
}

DatasetConfig dataset_config_from_json(const Json& j)
{
    const std::string sec = "synth";
    io::reject_unknown_keys(j,
                            {"model", "trials", "words_per_trial", "test_fraction", "source_vocab", "successors",
                             "min_count", "context_length", "context_decay"},
                            sec);
    DatasetConfig c;
    if (auto it = j.find("model"); it != j.end()) {
        const std::string ms = sec + ".model";
        io::reject_unknown_keys(*it,
                                {"subjects", "channels", "dim", "sample_rate", "kernel_length_s", "alpha",
                                 "subject_scale", "ar_coefficient", "snr_db", "nonlinearity", "nonlinearity_gain",
                                 "seed"},
                                ms);
        auto& m = c.model;
        io::read_field(*it, "subjects", m.subjects, ms);
        io::read_field(*it, "channels", m.channels, ms);
        io::read_field(*it, "dim", m.dim, ms);
        io::read_field(*it, "sample_rate", m.sample_rate, ms);
        io::read_field(*it, "kernel_length_s", m.kernel_length_s, ms);
        io::read_field(*it, "alpha", m.alpha, ms);
        io::read_field(*it, "subject_scale", m.subject_scale, ms);
        io::read_field(*it, "ar_coefficient", m.ar_coefficient, ms);
        io::read_number_or_inf(*it, "snr_db", m.snr_db, ms);
        std::string nl = to_string(m.nonlinearity);
        io::read_field(*it, "nonlinearity", nl, ms);
        m.nonlinearity = parse_nonlinearity(nl);
        io::read_field(*it, "nonlinearity_gain", m.nonlinearity_gain, ms);
        io::read_field(*it, "seed", m.seed, ms);
    }
    io::read_field(j, "trials", c.trials, sec);
    io::read_field(j, "words_per_trial", c.words_per_trial, sec);
    io::read_field(j, "test_fraction", c.test_fraction, sec);
    io::read_field(j, "source_vocab", c.source_vocab, sec);
    io::read_field(j, "successors", c.successors, sec);
    io::read_field(j, "min_count", c.min_count, sec);
    io::read_field(j, "context_length", c.context_length, sec);
    io::read_field(j, "context_decay", c.context_decay, sec);
    return c;
}

namespace {

std::vector<std::string> tokens_of(const std::vector<WordAnnotation>& words)
{
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words)
        out.push_back(w.token);
    return out;
}

void compute_word_vectors(Dataset& d)
{
    for (auto& s : d.stimuli) {
        const auto ids = d.vocab.encode(tokens_of(s.words));
        s.word_vectors = contextual_embed_sequence(d.table, ids, d.config.context_length, d.config.context_decay);
    }
}

} // namespace

std::vector<std::vector<int>> training_ids(const Dataset& d)
{
    std::vector<std::vector<int>> out;
    for (const auto& s : d.stimuli)
        if (!s.test)
            out.push_back(d.vocab.encode(tokens_of(s.words)));
    return out;
}

Dataset make_dataset(const DatasetConfig& cfg)
{
    cfg.validate();
    const auto seed = cfg.model.seed;
    Dataset d;
    d.config = cfg;

    const auto source = make_source_language(cfg.source_vocab, cfg.successors, derive_rng(seed, {4})());
    for (int i = 0; i < cfg.trials; ++i) {
        auto text = gen_text(source, cfg.words_per_trial, derive_rng(seed, {5, static_cast<std::uint64_t>(i)})());
        d.stimuli.push_back(Stimulus{i, false, std::move(text.words), text.duration, {}});
    }

    std::vector<int> order(static_cast<std::size_t>(cfg.trials));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = derive_rng(seed, {6});
    std::shuffle(order.begin(), order.end(), split_rng);
    const int n_test = std::clamp(static_cast<int>(std::lround(cfg.test_fraction * cfg.trials)), 1, cfg.trials - 1);
    for (int k = 0; k < n_test; ++k)
        d.stimuli[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].test = true;

    std::vector<std::vector<std::string>> train_tokens;
    for (const auto& s : d.stimuli)
        if (!s.test)
            train_tokens.push_back(tokens_of(s.words));
    d.vocab = Vocabulary::build(train_tokens, cfg.min_count);
    auto emb = build_static_embeddings(training_ids(d), d.vocab.size(), cfg.model.dim);
    d.table = std::move(emb.table);
    d.warnings = std::move(emb.warnings);
    compute_word_vectors(d);

    for (const auto& s : d.stimuli) {
        auto raw = rasterize_raw(s.words, s.word_vectors, cfg.model.sample_rate, s.duration);
        auto standardized = zscore_channels(raw).series;
        for (int subj = 0; subj < cfg.model.subjects; ++subj)
            d.recordings.push_back(
                Recording{subj, s.id, simulate_meg(standardized, subj, cfg.model, static_cast<std::uint64_t>(s.id))});
    }
    return d;
}

EmbeddingSeries stimulus_target(const Stimulus& s, double rate)
{
    return rasterize(s.words, s.word_vectors, rate, s.duration).series;
}

namespace {

std::string stimulus_stem(int id)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "stim%03d", id);
    return buf;
}

std::string recording_name(int subject, int stimulus)
{
    char buf[48];
    std::snprintf(buf, sizeof(buf), "meg/sub%02d_stim%03d.nts1", subject, stimulus);
    return buf;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

fs::path write_dataset(const Dataset& d, const fs::path& dir)
{
    fs::create_directories(dir / "meg");
    fs::create_directories(dir / "text");
    Json files = Json::object();
    auto record = [&](const std::string& rel) { files[rel] = io::sha256_file(dir / rel); };

    write_text(dir / "vocab.tsv", d.vocab.serialize());
    record("vocab.tsv");
    io::write_nts1(dir / "static_embeddings.nts1", TimeSeries{d.table.vectors, 0.0});
    record("static_embeddings.nts1");

    Json stimuli = Json::array();
    for (const auto& s : d.stimuli) {
        const auto stem = stimulus_stem(s.id);
        const std::string ann = "text/" + stem + ".tsv";
        const std::string emb = "text/" + stem + ".emb.nts1";
        write_annotations(dir / ann, s.words);
        record(ann);
        write_word_embeddings(dir / emb, s.word_vectors);
        record(emb);
        stimuli.push_back(Json{{"id", s.id},
                               {"split", s.test ? "test" : "train"},
                               {"duration_s", s.duration},
                               {"annotations", ann},
                               {"embeddings", emb}});
    }
    Json recordings = Json::array();
    for (const auto& r : d.recordings) {
        const auto rel = recording_name(r.subject, r.stimulus);
        io::write_nts1(dir / rel, r.meg);
        record(rel);
        recordings.push_back(Json{{"subject", r.subject}, {"stimulus", r.stimulus}, {"meg", rel}});
    }
    Json manifest{{"format", "semdec-dataset"},
                  {"version", 1},
                  {"config", to_json(d.config)},
                  {"vocabulary", "vocab.tsv"},
                  {"static_embeddings", "static_embeddings.nts1"},
                  {"stimuli", stimuli},
                  {"recordings", recordings},
                  {"warnings", d.warnings},
                  {"sha256", files}};
    const auto path = dir / dataset_manifest_name;
    io::write_json(path, manifest);
    return path;
}

Dataset load_dataset(const fs::path& dir)
{
    const auto manifest = io::read_json(dir / dataset_manifest_name);
    try {
        if (manifest.at("format") != "semdec-dataset" || manifest.at("version") != 1)
            throw DataError(dir.string() + ": not a version 1 dataset manifest");
        const auto& sums = manifest.at("sha256");
        auto checked = [&](const std::string& rel) {
            const auto path = dir / rel;
            auto it = sums.find(rel);
            if (it == sums.end())
                throw DataError(path.string() + ": no checksum in manifest");
            if (io::sha256_file(path) != it->get<std::string>())
                throw DataError(path.string() + ": checksum mismatch");
            return path;
        };

        Dataset d;
        d.config = dataset_config_from_json(manifest.at("config"));
        d.config.validate();
        d.vocab = Vocabulary::deserialize(read_text(checked(manifest.at("vocabulary").get<std::string>())));
        d.table.vectors = io::read_nts1(checked(manifest.at("static_embeddings").get<std::string>()), true).data;
        if (d.table.vocab_size() != d.vocab.size() || d.table.dim() != d.config.model.dim)
            throw ShapeError(dir.string() + ": static embedding table does not match vocabulary and dim");
        for (const auto& js : manifest.at("stimuli")) {
            Stimulus s;
            s.id = js.at("id").get<int>();
            if (s.id != static_cast<int>(d.stimuli.size()))
                throw DataError(dir.string() + ": stimuli must be listed in id order");
            s.test = js.at("split").get<std::string>() == "test";
            s.duration = js.at("duration_s").get<double>();
            s.words = read_annotations(checked(js.at("annotations").get<std::string>()));
            s.word_vectors = import_embeddings(checked(js.at("embeddings").get<std::string>()), d.config.model.dim,
                                               static_cast<Index>(s.words.size()));
            d.stimuli.push_back(std::move(s));
        }
        for (const auto& jr : manifest.at("recordings")) {
            Recording r;
            r.subject = jr.at("subject").get<int>();
            r.stimulus = jr.at("stimulus").get<int>();
            if (r.subject < 0 || r.subject >= d.config.model.subjects || r.stimulus < 0
                || r.stimulus >= static_cast<int>(d.stimuli.size()))
                throw DataError(dir.string() + ": recording refers to an unknown subject or stimulus");
            r.meg = io::read_nts1(checked(jr.at("meg").get<std::string>()));
            if (r.meg.channels() != d.config.model.channels)
                throw ShapeError(dir.string() + ": recording channel count differs from the config");
            d.recordings.push_back(std::move(r));
        }
        for (const auto& w : manifest.at("warnings"))
            d.warnings.push_back(w.get<std::string>());
        return d;
    } catch (const Json::exception& e) {
        throw DataError(dir.string() + ": malformed dataset manifest: " + e.what());
    }
}

} // namespace semdec::synth
