#include "semdec/cli/cli.hpp"
#include "semdec/io/json_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace semdec;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "semdec_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small enough to train and decode in a few seconds.
std::string tiny_config(const fs::path& dir)
{
    io::Json cfg = {{"synth", {{"trials", 6}, {"words_per_trial", 100}, {"model", {{"subjects", 2}}}}},
                    {"cwer", {{"hidden", 8}, {"head_hidden", 8}, {"blocks", 1}, {"kernel", 5}}},
                    {"train", {{"lr", 1e-3}, {"max_epochs", 2}, {"negatives", 8}, {"batch", 8}}},
                    {"ridge", {{"lambdas", {1.0, 100.0}}, {"folds", 2}}},
                    {"decoder", {{"beam", 10}}},
                    {"pipeline", {{"nulls", 100}}}};
    const auto path = dir / "config.json";
    io::write_json(path, cfg);
    return path.string();
}

// Dataset and CWER checkpoint shared by the later cases.
struct Fixture {
    fs::path dir;
    std::string conf, data, ckpt, decoded;

    Fixture()
    {
        dir = scratch("fixture");
        conf = tiny_config(dir);
        data = (dir / "data").string();
        ckpt = (dir / "model.ckpt").string();
        decoded = (dir / "decoded").string();
        REQUIRE(run({"synth", "--config", conf, "--seed", "3", "--out", data}).code == 0);
        REQUIRE(run({"train", "--config", conf, "--quiet", "--dataset", data, "--out", ckpt}).code == 0);
        REQUIRE(run({"decode", "--config", conf, "--dataset", data, "--checkpoint", ckpt, "--out", decoded}).code == 0);
    }
};

const Fixture& fixture()
{
    static const Fixture f;
    return f;
}

} // namespace

TEST_CASE("synth with the same seed writes identical checksums")
{
    const auto dir = scratch("synth_twice");
    const auto conf = tiny_config(dir);
    for (const char* name : {"a", "b"})
        REQUIRE(run({"synth", "--config", conf, "--seed", "7", "--subjects", "3", "--out", (dir / name).string()})
                    .code == 0);
    const auto a = io::read_json(dir / "a" / "dataset.json");
    CHECK(a.dump() == io::read_json(dir / "b" / "dataset.json").dump());
    CHECK(a.dump().find("sha256") != std::string::npos);
}

TEST_CASE("synth creates a missing output directory")
{
    const auto dir = scratch("nested");
    const auto out = dir / "x" / "y" / "data";
    REQUIRE_FALSE(fs::exists(out));
    const auto r = run({"synth", "--config", tiny_config(dir), "--out", out.string()});
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "dataset.json"));
}

TEST_CASE("an invalid shared-mixing weight is a config error naming the field")
{
    const auto dir = scratch("alpha");
    const auto r = run({"synth", "--alpha", "1.5", "--out", (dir / "data").string()});
    CHECK(r.code == cli::exit_config);
    CHECK(r.err.find("alpha") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with code 2")
{
    const auto dir = scratch("config_errors");
    CHECK(run({"frobnicate"}).code == cli::exit_config);
    CHECK(run({"synth"}).code == cli::exit_config);
    std::ofstream(dir / "broken.json") << "{\"synth\": ";
    CHECK(run({"synth", "--config", (dir / "broken.json").string(), "--out", (dir / "d").string()}).code ==
          cli::exit_config);
    std::ofstream(dir / "unknown.json") << "{\"synth\": {\"trails\": 3}}";
    const auto r = run({"synth", "--config", (dir / "unknown.json").string(), "--out", (dir / "d").string()});
    CHECK(r.code == cli::exit_config);
    CHECK(r.err.find("trails") != std::string::npos);
    CHECK(run({"train", "--dataset", fixture().data, "--model", "linear", "--out", (dir / "m").string()}).code ==
          cli::exit_config);
}

TEST_CASE("malformed input files exit with code 4")
{
    const auto dir = scratch("data_errors");
    CHECK(run({"train", "--dataset", (dir / "nowhere").string(), "--out", (dir / "m").string()}).code ==
          cli::exit_data);
    fs::copy(fixture().data, dir / "data", fs::copy_options::recursive);
    std::ofstream(dir / "data" / "dataset.json") << "not json";
    CHECK(run({"train", "--dataset", (dir / "data").string(), "--out", (dir / "m").string()}).code ==
          cli::exit_data);
    std::ofstream(dir / "garbage.ckpt") << "garbage";
    CHECK(run({"eval-segments", "--dataset", fixture().data, "--checkpoint", (dir / "garbage.ckpt").string(),
               "--out", (dir / "seg.json").string()})
              .code == cli::exit_data);
}

TEST_CASE("a corrupted signal file fails the checksum check")
{
    const auto dir = scratch("corrupt");
    fs::copy(fixture().data, dir / "data", fs::copy_options::recursive);
    for (const auto& e : fs::recursive_directory_iterator(dir / "data"))
        if (e.path().extension() == ".nts1") {
            std::fstream f(e.path(), std::ios::in | std::ios::out | std::ios::binary);
            f.seekp(-1, std::ios::end);
            f.put('\x7f');
            break;
        }
    const auto r = run({"eval-segments", "--truth", "--dataset", (dir / "data").string(), "--out",
                        (dir / "seg.json").string()});
    CHECK(r.code == cli::exit_data);
}

TEST_CASE("a checkpoint from a different sensor layout is a shape error")
{
    const auto dir = scratch("shape");
    const auto conf = tiny_config(dir);
    REQUIRE(run({"synth", "--config", conf, "--channels", "12", "--out", (dir / "data").string()}).code == 0);
    const auto r = run({"eval-segments", "--config", conf, "--dataset", (dir / "data").string(), "--checkpoint",
                        fixture().ckpt, "--out", (dir / "seg.json").string()});
    CHECK(r.code == cli::exit_data);
}

TEST_CASE("every model family trains from the command line")
{
    const auto& f = fixture();
    const auto dir = scratch("families");
    for (const char* model : {"cwer", "cwer-nosubject", "cwer-persubject", "ridge"}) {
        CAPTURE(model);
        const auto ckpt = (dir / (std::string(model) + ".ckpt")).string();
        const auto r = run({"train", "--config", f.conf, "--quiet", "--model", model, "--dataset", f.data, "--out", ckpt});
        REQUIRE(r.code == 0);
        CHECK(fs::exists(ckpt + ".train.json"));
        CHECK(run({"eval-segments", "--config", f.conf, "--dataset", f.data, "--checkpoint", ckpt, "--out",
                   (dir / (std::string(model) + ".json")).string()})
                  .code == 0);
    }
}

TEST_CASE("training defaults to the documented learning rate")
{
    const auto dir = scratch("lr");
    io::write_json(dir / "config.json", {{"train", {{"max_epochs", 1}, {"negatives", 8}}}});
    REQUIRE(run({"train", "--quiet", "--config", (dir / "config.json").string(), "--dataset", fixture().data,
                 "--out", (dir / "m.ckpt").string()})
                .code == 0);
    const auto snap = io::read_json(dir / "m.ckpt.run.json");
    CHECK(snap.at("config").at("train").at("lr").get<double>() == doctest::Approx(5e-5));
}

TEST_CASE("retraining with the same seed reproduces the loss history")
{
    const auto& f = fixture();
    const auto dir = scratch("retrain");
    for (const char* threads : {"1", "2"})
        REQUIRE(run({"train", "--config", f.conf, "--quiet", "--threads", threads, "--dataset", f.data, "--out",
                     (dir / (std::string("m") + threads + ".ckpt")).string()})
                    .code == 0);
    CHECK(slurp(dir / "m1.ckpt") == slurp(f.ckpt));
    CHECK(slurp(dir / "m2.ckpt") == slurp(f.ckpt));
    const auto a = io::read_json(dir / "m1.ckpt.train.json");
    const auto b = io::read_json(f.ckpt + ".train.json");
    CHECK(a.at("history") == b.at("history"));
}

TEST_CASE("segment evaluation on the true embeddings is perfect")
{
    const auto dir = scratch("truth_segments");
    const auto out = dir / "seg.json";
    REQUIRE(run({"eval-segments", "--config", fixture().conf, "--truth", "--dataset", fixture().data, "--out",
                 out.string()})
                .code == 0);
    const auto report = io::read_json(out);
    std::vector<double> durations;
    for (const auto& d : report.at("durations")) {
        durations.push_back(d.at("duration_s").get<double>());
        CHECK(d.at("top10").get<double>() == doctest::Approx(100.0));
        CHECK(d.at("rank_accuracy").get<double>() == doctest::Approx(100.0));
    }
    CHECK(durations == std::vector<double>{3.0, 5.0, 10.0});
    CHECK(fs::exists(dir / "seg.json.txt"));
}

TEST_CASE("decode writes one table per test recording and is deterministic")
{
    const auto& f = fixture();
    const auto manifest = io::read_json(fs::path(f.decoded) / "decoded.json");
    std::size_t tables = 0;
    for (const auto& e : fs::directory_iterator(fs::path(f.decoded) / "decoded"))
        tables += e.path().extension() == ".tsv";
    CHECK(tables == manifest.at("trials").size());
    CHECK(tables > 0);
    const auto again = scratch("decode_again") / "decoded";
    REQUIRE(run({"decode", "--config", f.conf, "--dataset", f.data, "--checkpoint", f.ckpt, "--out", again.string()})
                .code == 0);
    CHECK(slurp(again / "decoded.json") == slurp(fs::path(f.decoded) / "decoded.json"));
}

TEST_CASE("sequence evaluation reports, exports, imports and plots")
{
    const auto& f = fixture();
    const auto dir = scratch("sequence");
    const auto report = dir / "seq.json";
    const auto scores = dir / "scores.tsv";
    const auto plots = dir / "plots";
    REQUIRE(run({"eval-sequence", "--config", f.conf, "--dataset", f.data, "--decoded", f.decoded, "--out",
                 report.string(), "--export-scores", scores.string(), "--plot", plots.string()})
                .code == 0);
    const auto j = io::read_json(report);
    for (const char* key : {"score", "window_accuracy", "trial_accuracy"})
        CHECK(j.contains(key));
    CHECK(j.at("scorer") == "builtin");
    std::size_t svgs = 0;
    for (const auto& e : fs::directory_iterator(plots))
        svgs += e.path().extension() == ".svg";
    CHECK(svgs == j.at("trials").size());

    const auto imported = dir / "imported.json";
    REQUIRE(run({"eval-sequence", "--config", f.conf, "--dataset", f.data, "--decoded", f.decoded, "--out",
                 imported.string(), "--import-scores", scores.string()})
                .code == 0);
    auto k = io::read_json(imported);
    CHECK(k.at("scorer") == "external");
    k["scorer"] = "builtin";
    CHECK(k == j);

    const auto replot = dir / "replot";
    REQUIRE(run({"plot", "--report", report.string(), "--out", replot.string()}).code == 0);
    for (const auto& e : fs::directory_iterator(plots))
        CHECK(slurp(replot / e.path().filename()) == slurp(e.path()));
}

TEST_CASE("an incomplete score import is a data error")
{
    const auto& f = fixture();
    const auto dir = scratch("import_missing");
    const auto scores = dir / "scores.tsv";
    REQUIRE(run({"eval-sequence", "--config", f.conf, "--dataset", f.data, "--decoded", f.decoded, "--out",
                 (dir / "seq.json").string(), "--export-scores", scores.string()})
                .code == 0);
    std::string text = slurp(scores);
    text.erase(text.rfind('\n', text.size() - 2) + 1);
    std::ofstream(scores, std::ios::binary | std::ios::trunc) << text;
    const auto r = run({"eval-sequence", "--config", f.conf, "--dataset", f.data, "--decoded", f.decoded, "--out",
                        (dir / "seq2.json").string(), "--import-scores", scores.string()});
    CHECK(r.code == cli::exit_data);
}

TEST_CASE("a run snapshot alone replays the command")
{
    const auto& f = fixture();
    const auto dir = scratch("replay");
    const auto report = dir / "seq.json";
    REQUIRE(run({"eval-sequence", "--config", f.conf, "--dataset", f.data, "--decoded", f.decoded, "--out",
                 report.string()})
                .code == 0);
    const auto first = slurp(report);
    fs::remove(report);
    REQUIRE(run({"replay", (dir / "seq.json.run.json").string()}).code == 0);
    CHECK(slurp(report) == first);

    const auto ckpt = fs::path(f.ckpt);
    const auto replayed = dir / "model.ckpt";
    auto snap = io::read_json(ckpt.string() + ".run.json");
    snap["options"]["out"] = replayed.string();
    io::write_json(dir / "train.run.json", snap);
    REQUIRE(run({"replay", "--quiet", (dir / "train.run.json").string()}).code == 0);
    CHECK(slurp(replayed) == slurp(ckpt));
}
