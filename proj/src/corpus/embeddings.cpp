#include "semdec/corpus/embeddings.hpp"

#include "semdec/io/nts1.hpp"
#include "semdec/sigproc/dsp.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace semdec {

StaticEmbeddingResult build_static_embeddings(const std::vector<std::vector<int>>& trials, int vocab_size, int dim,
                                              int window)
{
    if (dim < 2)
        throw ConfigError("build_static_embeddings: dimensionality must be >= 2");
    if (dim > vocab_size)
        throw ConfigError("build_static_embeddings: dimensionality " + std::to_string(dim)
                          + " exceeds vocabulary size " + std::to_string(vocab_size));
    if (window < 1)
        throw ConfigError("build_static_embeddings: window must be >= 1");

    MatrixD cooc = MatrixD::Zero(vocab_size, vocab_size);
    for (const auto& t : trials) {
        const auto n = static_cast<Index>(t.size());
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n && j - i <= window; ++j) {
                const int a = t[static_cast<std::size_t>(i)];
                const int b = t[static_cast<std::size_t>(j)];
                if (a < 0 || a >= vocab_size || b < 0 || b >= vocab_size)
                    throw DataError("build_static_embeddings: token id outside vocabulary");
                cooc(a, b) += 1.0;
                cooc(b, a) += 1.0;
            }
    }
    const VectorD marginal = cooc.rowwise().sum();
    const double total = marginal.sum();
    if (total <= 0.0)
        throw DataError("build_static_embeddings: no co-occurrences in corpus");

    MatrixD ppmi = MatrixD::Zero(vocab_size, vocab_size);
    for (Index j = 0; j < vocab_size; ++j)
        for (Index i = 0; i < vocab_size; ++i)
            if (cooc(i, j) > 0.0)
                ppmi(i, j) = std::max(0.0, std::log(cooc(i, j) * total / (marginal[i] * marginal[j])));

    Eigen::BDCSVD<MatrixD> svd(ppmi, Eigen::ComputeThinU);
    const VectorD& sv = svd.singularValues();
    const double tol = sv.size() > 0 ? sv[0] * 1e-10 : 0.0;
    Index rank = 0;
    while (rank < sv.size() && sv[rank] > tol)
        ++rank;

    StaticEmbeddingResult res;
    const Index used = std::min<Index>(rank, dim);
    res.padded_dims = dim - used;
    if (res.padded_dims > 0)
        res.warnings.push_back("PPMI rank " + std::to_string(rank) + " below requested dimensionality "
                               + std::to_string(dim) + "; padding " + std::to_string(res.padded_dims)
                               + " zero dimensions");

    MatrixD emb = MatrixD::Zero(dim, vocab_size);
    for (Index k = 0; k < used; ++k) {
        VectorD u = svd.matrixU().col(k);
        Index arg = 0;
        u.cwiseAbs().maxCoeff(&arg);
        if (u[arg] < 0.0)
            u = -u;
        emb.row(k) = (u * std::sqrt(sv[k])).transpose();
    }
    for (Index w = 0; w < vocab_size; ++w) {
        const double norm = emb.col(w).norm();
        if (norm > 0.0)
            emb.col(w) /= norm;
    }
    res.table.vectors = emb.cast<float>();
    return res;
}

ContextEmbedding contextual_embed(const EmbeddingTable& table, std::span<const int> context, int max_context,
                                  double gamma)
{
    if (context.empty())
        throw DataError("contextual_embed: empty context");
    if (max_context < 1)
        throw ConfigError("contextual_embed: context length must be >= 1");
    const auto n = std::min<std::size_t>(context.size(), static_cast<std::size_t>(max_context));
    VectorD acc = VectorD::Zero(table.dim());
    double w = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        const int id = context[context.size() - 1 - j];
        if (id < 0 || id >= table.vocab_size())
            throw DataError("contextual_embed: token id outside vocabulary");
        acc += w * table.vectors.col(id).cast<double>();
        w *= gamma;
    }
    const double norm = acc.norm();
    if (norm <= 0.0)
        return {VectorF::Zero(table.dim()), true};
    return {(acc / norm).cast<float>(), false};
}

MatrixF contextual_embed_sequence(const EmbeddingTable& table, std::span<const int> ids, int max_context,
                                  double gamma)
{
    MatrixF out(table.dim(), static_cast<Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i)
        out.col(static_cast<Index>(i)) = contextual_embed(table, ids.first(i + 1), max_context, gamma).vector;
    return out;
}

void write_word_embeddings(const std::filesystem::path& path, const MatrixF& vectors)
{
    io::write_nts1(path, TimeSeries{vectors, 0.0});
}

MatrixF import_embeddings(const std::filesystem::path& path, Index expected_dim, Index expected_count)
{
    TimeSeries file = io::read_nts1(path, true);
    if (file.sample_rate != 0.0)
        throw DataError(path.string() + ": per-word embedding files must carry sample rate 0");
    if (file.channels() != expected_dim)
        throw ShapeError(path.string() + ": embedding dimension " + std::to_string(file.channels())
                         + " does not match configured " + std::to_string(expected_dim));
    if (file.samples() != expected_count)
        throw ShapeError(path.string() + ": expected " + std::to_string(expected_count)
                         + " word embeddings (one per annotation), found " + std::to_string(file.samples()));
    return std::move(file.data);
}

EmbeddingSeries rasterize_raw(const std::vector<WordAnnotation>& words, const MatrixF& vectors, double rate,
                              double trial_len_s)
{
    if (!(rate > 0.0) || !(trial_len_s > 0.0))
        throw ConfigError("rasterize: rate and trial length must be positive");
    if (vectors.cols() != static_cast<Index>(words.size()))
        throw ShapeError("rasterize: " + std::to_string(words.size()) + " annotations but "
                         + std::to_string(vectors.cols()) + " vectors");
    validate_annotations(words);
    if (!words.empty() && words.back().t_off > trial_len_s + 1e-9)
        throw DataError("rasterize: annotation '" + words.back().token + "' extends past the trial end");
    const auto samples = static_cast<Index>(std::floor(trial_len_s * rate + 1e-9));
    if (samples < 1)
        throw DataError("rasterize: trial shorter than one sample");
    EmbeddingSeries out{MatrixF::Zero(vectors.rows(), samples), rate};
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto lo = static_cast<Index>(std::floor(words[i].t_on * rate + 1e-9));
        const auto hi = std::min(samples, static_cast<Index>(std::floor(words[i].t_off * rate + 1e-9)));
        for (Index t = lo; t < hi; ++t)
            out.data.col(t) = vectors.col(static_cast<Index>(i));
    }
    return out;
}

RasterizeResult rasterize(const std::vector<WordAnnotation>& words, const MatrixF& vectors, double rate,
                          double trial_len_s, double lowpass_hz)
{
    EmbeddingSeries raw = rasterize_raw(words, vectors, rate, trial_len_s);
    const auto taps = design_fir(FilterSpec::lowpass(lowpass_hz), rate);
    auto z = zscore_channels(filtfilt(raw, taps));
    return {std::move(z.series), std::move(z.constant_channels)};
}

} // namespace semdec
