#pragma once

#include "semdec/corpus/text.hpp"
#include "semdec/sigproc/timeseries.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace semdec {

/// Static word vectors, one unit-norm column per vocabulary id.
struct EmbeddingTable {
    MatrixF vectors; // D x V
    Index dim() const { return vectors.rows(); }
    Index vocab_size() const { return vectors.cols(); }
};

struct StaticEmbeddingResult {
    EmbeddingTable table;
    Index padded_dims = 0; // dimensions beyond the PPMI rank, left at zero
    std::vector<std::string> warnings;
};

/// Positive PMI over a symmetric co-occurrence window, factorized by SVD.
/// Columns are scaled to unit norm; words that never co-occur stay zero.
StaticEmbeddingResult build_static_embeddings(const std::vector<std::vector<int>>& trials, int vocab_size, int dim,
                                              int window = 5);

struct ContextEmbedding {
    VectorF vector;
    bool degenerate = false; // every contributing vector was zero
};

/// Exponentially decayed average of the last min(max_context, n) static
/// vectors (newest weight 1, then gamma, gamma^2, ...), renormalized.
ContextEmbedding contextual_embed(const EmbeddingTable& table, std::span<const int> context, int max_context = 8,
                                  double gamma = 0.5);

/// Contextual vector for every position of an id sequence.
MatrixF contextual_embed_sequence(const EmbeddingTable& table, std::span<const int> ids, int max_context = 8,
                                  double gamma = 0.5);

/// NTS1 file with channels = D, samples = word count and sample rate 0;
/// column i belongs to annotation i.
void write_word_embeddings(const std::filesystem::path& path, const MatrixF& vectors);
MatrixF import_embeddings(const std::filesystem::path& path, Index expected_dim, Index expected_count);

/// Word vectors held constant over [floor(t_on*rate), floor(t_off*rate)), zero elsewhere.
EmbeddingSeries rasterize_raw(const std::vector<WordAnnotation>& words, const MatrixF& vectors, double rate,
                              double trial_len_s);

struct RasterizeResult {
    EmbeddingSeries series;
    std::vector<Index> constant_dims;
};

/// rasterize_raw followed by a 4 Hz low-pass and per-dimension standardization.
RasterizeResult rasterize(const std::vector<WordAnnotation>& words, const MatrixF& vectors, double rate,
                          double trial_len_s, double lowpass_hz = 4.0);

} // namespace semdec
