#pragma once

#include "semdec/types.hpp"

namespace semdec {

/// Multichannel series sampled on a uniform grid: C x T, time along columns.
struct TimeSeries {
    MatrixF data;
    double sample_rate = 0.0;

    Index channels() const { return data.rows(); }
    Index samples() const { return data.cols(); }
    double duration() const { return static_cast<double>(samples()) / sample_rate; }
};

/// Embedding series share the container; channels are embedding dimensions.
using EmbeddingSeries = TimeSeries;

inline void validate(const TimeSeries& x, const char* what = "series")
{
    if (!(x.sample_rate > 0.0))
        throw DataError(std::string(what) + ": sample rate must be > 0");
    if (x.samples() < 1)
        throw DataError(std::string(what) + ": empty series");
    if (!x.data.allFinite())
        throw DataError(std::string(what) + ": non-finite samples");
}

} // namespace semdec
