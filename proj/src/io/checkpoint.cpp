#include "semdec/io/checkpoint.hpp"

#include "semdec/io/checksum.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace semdec::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::uint32_t version = 1;

class Writer {
public:
    template <typename T>
    void put(T v)
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void raw(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> b, const std::string& o) : bytes(b), origin(o) {}
    template <typename T>
    T get()
    {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const std::uint8_t* take(std::size_t n)
    {
        if (n > bytes.size() - pos)
            throw DataError(origin + ": truncated checkpoint");
        const auto* p = bytes.data() + pos;
        pos += n;
        return p;
    }
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
    const std::string& origin;
};

template <typename M>
void put_matrix(Writer& w, const M& m)
{
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    w.raw(m.data(), sizeof(typename M::Scalar) * static_cast<std::size_t>(m.size()));
}

template <typename M>
M get_matrix(Reader& r)
{
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    M m(rows, cols);
    const std::size_t n = sizeof(typename M::Scalar) * static_cast<std::size_t>(rows) * cols;
    std::memcpy(m.data(), r.take(n), n);
    if (!m.allFinite())
        throw DataError(r.origin + ": non-finite parameter values");
    return m;
}

} // namespace

const NamedBlob& Checkpoint::blob(const std::string& name) const
{
    for (const auto& b : blobs)
        if (b.name == name)
            return b;
    throw DataError("checkpoint: missing blob '" + name + "'");
}

const MatrixF& Checkpoint::f32(const std::string& name) const
{
    const auto* m = std::get_if<MatrixF>(&blob(name).value);
    if (!m)
        throw DataError("checkpoint: blob '" + name + "' is not 32-bit");
    return *m;
}

const MatrixD& Checkpoint::f64(const std::string& name) const
{
    const auto* m = std::get_if<MatrixD>(&blob(name).value);
    if (!m)
        throw DataError("checkpoint: blob '" + name + "' is not 64-bit");
    return *m;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    if (ckpt.kind.size() != 4)
        throw ConfigError("checkpoint kind tag must have 4 characters");
    Writer w;
    w.raw("CWER", 4);
    w.put<std::uint32_t>(version);
    w.raw(ckpt.kind.data(), 4);
    const std::string cfg = ckpt.config.dump();
    w.put<std::uint64_t>(cfg.size());
    w.raw(cfg.data(), cfg.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& b : ckpt.blobs) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.name.size()));
        w.raw(b.name.data(), b.name.size());
        if (const auto* f = std::get_if<MatrixF>(&b.value)) {
            w.put<std::uint8_t>(0);
            put_matrix(w, *f);
        } else {
            w.put<std::uint8_t>(1);
            put_matrix(w, std::get<MatrixD>(b.value));
        }
    }
    const auto digest = sha256(w.bytes);
    w.raw(digest.data(), digest.size());
    return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin)
{
    constexpr std::size_t digest_size = 32;
    if (bytes.size() < 4 + digest_size || std::memcmp(bytes.data(), "CWER", 4) != 0)
        throw DataError(origin + ": not a model checkpoint");
    const auto body = bytes.first(bytes.size() - digest_size);
    const auto digest = sha256(body);
    if (std::memcmp(digest.data(), bytes.data() + body.size(), digest_size) != 0)
        throw DataError(origin + ": checkpoint checksum mismatch (file corrupted)");

    Reader r(body, origin);
    r.take(4);
    if (r.get<std::uint32_t>() != version)
        throw DataError(origin + ": unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.kind.assign(reinterpret_cast<const char*>(r.take(4)), 4);
    const auto cfg_len = r.get<std::uint64_t>();
    if (cfg_len > body.size())
        throw DataError(origin + ": truncated checkpoint");
    const auto* cfg = r.take(cfg_len);
    try {
        ckpt.config = Json::parse(cfg, cfg + cfg_len);
    } catch (const Json::exception& e) {
        throw DataError(origin + ": malformed checkpoint config: " + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedBlob b;
        const auto len = r.get<std::uint32_t>();
        b.name.assign(reinterpret_cast<const char*>(r.take(len)), len);
        const auto dtype = r.get<std::uint8_t>();
        if (dtype == 0)
            b.value = get_matrix<MatrixF>(r);
        else if (dtype == 1)
            b.value = get_matrix<MatrixD>(r);
        else
            throw DataError(origin + ": unknown blob dtype");
        ckpt.blobs.push_back(std::move(b));
    }
    if (r.pos != body.size())
        throw DataError(origin + ": trailing bytes in checkpoint");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path.string());
}

} // namespace semdec::io
