#include "semdec/corpus/text.hpp"

#include "semdec/io/tsv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace semdec {

std::string normalize_token(std::string_view raw)
{
    std::size_t b = 0, e = raw.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(raw[b])))
        ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1])))
        --e;
    std::string out(raw.substr(b, e - b));
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void validate_annotations(const std::vector<WordAnnotation>& words)
{
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto& w = words[i];
        if (!std::isfinite(w.t_on) || !std::isfinite(w.t_off) || !(w.t_off > w.t_on))
            throw DataError("annotation " + std::to_string(i) + " ('" + w.token + "'): offset must exceed onset");
        if (i > 0 && w.t_on < words[i - 1].t_off)
            throw DataError("annotation " + std::to_string(i) + " ('" + w.token
                            + "') overlaps or precedes the previous word");
    }
}

using io::format_double;
using io::parse_double;
using io::split_tabs;

void write_annotations(const std::filesystem::path& path, const std::vector<WordAnnotation>& words)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    for (const auto& w : words)
        out << w.token << '\t' << format_double(w.t_on) << '\t' << format_double(w.t_off) << '\n';
}

std::vector<WordAnnotation> read_annotations(const std::filesystem::path& path)
{
    std::vector<WordAnnotation> words;
    io::for_each_tsv_row(path, [&](const std::vector<std::string_view>& fields, const std::string& where) {
        if (fields.size() != 3)
            throw DataError(where + ": expected token<TAB>t_on<TAB>t_off");
        words.push_back({std::string(fields[0]), parse_double(fields[1], where), parse_double(fields[2], where)});
    });
    validate_annotations(words);
    return words;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& trials, int min_count)
{
    if (min_count < 1)
        throw ConfigError("build_vocab: min_count must be >= 1");
    std::map<std::string, long> counts;
    long total = 0;
    for (const auto& trial : trials)
        for (const auto& raw : trial) {
            auto tok = normalize_token(raw);
            if (tok.empty())
                continue;
            ++counts[tok];
            ++total;
        }
    if (total == 0)
        throw DataError("build_vocab: empty corpus");

    std::vector<std::pair<std::string, long>> kept;
    long dropped = 0;
    for (auto& [tok, c] : counts) {
        if (c >= min_count && tok != unk_token)
            kept.emplace_back(tok, c);
        else
            dropped += c;
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    v.min_count_ = min_count;
    v.tokens_.emplace_back(unk_token);
    v.counts_.push_back(dropped);
    for (auto& [tok, c] : kept) {
        v.tokens_.push_back(tok);
        v.counts_.push_back(c);
    }
    for (int i = 0; i < v.size(); ++i)
        v.index_.emplace(v.tokens_[static_cast<std::size_t>(i)], i);
    return v;
}

int Vocabulary::id(std::string_view token) const
{
    auto it = index_.find(token);
    return it == index_.end() ? unk_id : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& raw_tokens) const
{
    std::vector<int> ids;
    ids.reserve(raw_tokens.size());
    for (const auto& raw : raw_tokens)
        ids.push_back(id(normalize_token(raw)));
    return ids;
}

std::string Vocabulary::serialize() const
{
    std::ostringstream out;
    out << "semdec-vocab\t1\t" << min_count_ << '\n';
    for (int i = 0; i < size(); ++i)
        out << tokens_[static_cast<std::size_t>(i)] << '\t' << counts_[static_cast<std::size_t>(i)] << '\n';
    return out.str();
}

Vocabulary Vocabulary::deserialize(std::string_view text)
{
    Vocabulary v;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        auto fields = split_tabs(line);
        const std::string where = "vocabulary line " + std::to_string(line_no);
        if (line_no == 1) {
            if (fields.size() != 3 || fields[0] != "semdec-vocab" || fields[1] != "1")
                throw DataError("vocabulary: bad header");
            v.min_count_ = static_cast<int>(parse_double(fields[2], where));
            continue;
        }
        if (fields.size() != 2)
            throw DataError(where + ": expected token<TAB>count");
        v.tokens_.emplace_back(fields[0]);
        v.counts_.push_back(static_cast<long>(parse_double(fields[1], where)));
    }
    if (v.tokens_.empty() || v.tokens_[0] != unk_token)
        throw DataError("vocabulary: first entry must be " + std::string(unk_token));
    for (int i = 0; i < v.size(); ++i)
        if (!v.index_.emplace(v.tokens_[static_cast<std::size_t>(i)], i).second)
            throw DataError("vocabulary: duplicate token '" + v.tokens_[static_cast<std::size_t>(i)] + "'");
    return v;
}

} // namespace semdec
