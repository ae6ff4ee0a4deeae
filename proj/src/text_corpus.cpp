#include "dcgm/text_corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "dcgm/error.hpp"
#include "io_util.hpp"

namespace dcgm {

namespace {

// Lowercase forms; matching lowercases the chunk first. Every entry contains a
// punctuation character, so no emitted word token can ever equal one.
constexpr std::array<std::string_view, 33> kEmoticons = {
    ":)",  ":-)", ":(",  ":-(", ";)",  ";-)", ":d",  ":-d", ";d",  ":p",  ":-p", ";p",
    ":/",  ":-/", ":\\", ":'(", ":')", ":o",  ":-o", ":|",  ":-|", ":*",  ":-*", "<3",
    "</3", "=)",  "=(",  "=d",  "(:",  "):",  "^_^", "^^",  "-_-"};

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }
bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c) != 0; }
bool is_word(unsigned char c) { return !is_space(c) && !is_punct(c); }

bool is_emoticon(std::string_view lowered)
{
    return std::find(kEmoticons.begin(), kEmoticons.end(), lowered) != kEmoticons.end();
}

// Removes a trailing emoticon glued to a word ("great:)"); longest match wins.
std::string_view strip_emoticon_suffix(std::string_view chunk)
{
    std::size_t best = 0;
    for (auto e : kEmoticons) {
        if (e.size() < chunk.size() && e.size() > best && chunk.ends_with(e) &&
            is_word(static_cast<unsigned char>(chunk[chunk.size() - e.size() - 1]))) {
            best = e.size();
        }
    }
    return chunk.substr(0, chunk.size() - best);
}

void split_chunk(std::string_view chunk, Tokens& out)
{
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(std::move(word));
            word.clear();
        }
    };
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        auto c = static_cast<unsigned char>(chunk[i]);
        if (c == '\'' && !word.empty() && i + 1 < chunk.size() &&
            is_word(static_cast<unsigned char>(chunk[i + 1]))) {
            word.push_back('\'');
        } else if (is_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            word.push_back(static_cast<char>(c));
        }
    }
    flush();
}

}  // namespace

std::span<const std::string_view> emoticon_list() { return kEmoticons; }

Tokens tokenize(std::string_view raw)
{
    Tokens out;
    std::size_t i = 0;
    while (i < raw.size()) {
        while (i < raw.size() && is_space(static_cast<unsigned char>(raw[i]))) ++i;
        auto start = i;
        while (i < raw.size() && !is_space(static_cast<unsigned char>(raw[i]))) ++i;
        if (start == i) break;

        std::string chunk(raw.substr(start, i - start));
        for (auto& ch : chunk) {
            auto c = static_cast<unsigned char>(ch);
            if (c < 0x80) ch = static_cast<char>(std::tolower(c));
        }
        if (is_emoticon(chunk)) continue;
        split_chunk(strip_emoticon_suffix(chunk), out);
    }
    return out;
}

std::string join(const Tokens& tokens, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += sep;
        out += tokens[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary()
{
    for (auto t : {kStartToken, kEndToken, kUnknownToken, kSeparatorToken}) {
        index_.emplace(std::string(t), static_cast<WordId>(tokens_.size()));
        tokens_.emplace_back(t);
        counts_.push_back(0);
    }
}

Vocabulary Vocabulary::from_entries(std::vector<std::pair<std::string, std::uint64_t>> entries)
{
    Vocabulary v;
    if (entries.size() < static_cast<std::size_t>(kNumReserved)) {
        throw ParseError("vocabulary is missing the reserved markers");
    }
    for (WordId i = 0; i < kNumReserved; ++i) {
        if (entries[static_cast<std::size_t>(i)].first != v.tokens_[static_cast<std::size_t>(i)]) {
            throw ParseError("vocabulary entry " + std::to_string(i) + " must be " +
                             v.tokens_[static_cast<std::size_t>(i)]);
        }
        v.counts_[static_cast<std::size_t>(i)] = entries[static_cast<std::size_t>(i)].second;
    }
    for (std::size_t i = static_cast<std::size_t>(kNumReserved); i < entries.size(); ++i) {
        auto& [tok, count] = entries[i];
        if (!v.index_.emplace(tok, static_cast<WordId>(v.tokens_.size())).second) {
            throw ParseError("duplicate vocabulary token '" + tok + "'");
        }
        v.tokens_.push_back(std::move(tok));
        v.counts_.push_back(count);
    }
    return v;
}

WordId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnknown); }

std::optional<WordId> Vocabulary::find(std::string_view token) const
{
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token(WordId id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DimensionError("word id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const noexcept
{
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& t : tokens_) {
        h = detail::fnv1a(t, h);
        h = detail::fnv1a("\n", h);
    }
    return h;
}

void Vocabulary::save(std::ostream& out) const
{
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        out << tokens_[i] << '\t' << counts_[i] << '\n';
    }
}

void Vocabulary::save(const std::filesystem::path& path) const
{
    auto out = detail::open_output(path);
    save(out);
}

Vocabulary Vocabulary::load(std::istream& in)
{
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::chomp(line);
        if (line.empty()) continue;
        auto cols = detail::split(line, '\t');
        if (cols.size() != 2) {
            throw ParseError("vocabulary line needs 2 columns", lineno);
        }
        try {
            entries.emplace_back(std::string(cols[0]), detail::parse_int<std::uint64_t>(cols[1], "count"));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return from_entries(std::move(entries));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path)
{
    auto in = detail::open_input(path);
    return load(in);
}

Vocabulary build_vocab(std::span<const Triple> corpus, std::size_t cap)
{
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& t : corpus) {
        for (const auto* seq : {&t.context, &t.message, &t.response}) {
            for (const auto& tok : *seq) ++freq[tok];
        }
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    std::uint64_t dropped = 0;
    for (std::size_t i = cap; i < ranked.size(); ++i) dropped += ranked[i].second;
    if (ranked.size() > cap) ranked.resize(cap);

    const auto n = static_cast<std::uint64_t>(corpus.size());
    std::vector<std::pair<std::string, std::uint64_t>> entries{
        {std::string(Vocabulary::kStartToken), 0},
        {std::string(Vocabulary::kEndToken), 3 * n},
        {std::string(Vocabulary::kUnknownToken), dropped},
        {std::string(Vocabulary::kSeparatorToken), 2 * n},
    };
    entries.insert(entries.end(), ranked.begin(), ranked.end());
    return Vocabulary::from_entries(std::move(entries));
}

Ids encode(const Tokens& tokens, const Vocabulary& vocab, bool frame)
{
    Ids ids;
    ids.reserve(tokens.size() + 2);
    if (frame) ids.push_back(Vocabulary::kStart);
    for (const auto& t : tokens) ids.push_back(vocab.id(t));
    if (frame) ids.push_back(Vocabulary::kEnd);
    return ids;
}

Tokens decode(std::span<const WordId> ids, const Vocabulary& vocab)
{
    Tokens out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(vocab.token(id));
    return out;
}

// ---------------------------------------------------------------------------
// Bag of words / n-grams

double BagOfWords::operator[](WordId id) const
{
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const auto& e, WordId v) { return e.first < v; });
    return it != entries_.end() && it->first == id ? it->second : 0.0;
}

void BagOfWords::add(WordId id, double count)
{
    if (id < 0 || static_cast<std::size_t>(id) >= dim_) {
        throw DimensionError("word id " + std::to_string(id) + " outside bag dimension " + std::to_string(dim_));
    }
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const auto& e, WordId v) { return e.first < v; });
    if (it != entries_.end() && it->first == id) {
        it->second += count;
    } else {
        entries_.insert(it, {id, count});
    }
}

std::vector<double> BagOfWords::dense() const
{
    std::vector<double> out(dim_, 0.0);
    for (auto [id, c] : entries_) out[static_cast<std::size_t>(id)] = c;
    return out;
}

BagOfWords& BagOfWords::operator+=(const BagOfWords& other)
{
    if (other.dim_ != dim_) {
        throw DimensionError("adding bags of different dimension");
    }
    for (auto [id, c] : other.entries_) add(id, c);
    return *this;
}

BagOfWords bag_of_words(std::span<const WordId> ids, std::size_t dim)
{
    BagOfWords bag(dim);
    for (auto id : ids) bag.add(id);
    return bag;
}

std::size_t NGramMultiset::total() const
{
    std::size_t n = 0;
    for (const auto& [_, c] : counts) n += c;
    return n;
}

std::size_t NGramMultiset::count(const Tokens& gram) const
{
    auto it = counts.find(gram);
    return it == counts.end() ? 0 : it->second;
}

NGramMultiset ngrams(const Tokens& tokens, std::size_t n)
{
    NGramMultiset out;
    out.order = n;
    if (n == 0 || tokens.size() < n) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++out.counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                            tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

std::vector<Triple> filter_triples(std::span<const Triple> corpus, std::size_t min_count)
{
    auto key = [](const std::string& a, const std::string& b) { return a + '\t' + b; };
    std::unordered_map<std::string, std::size_t> bigrams;
    for (const auto& t : corpus) {
        for (const auto* seq : {&t.context, &t.message, &t.response}) {
            for (std::size_t i = 0; i + 1 < seq->size(); ++i) ++bigrams[key((*seq)[i], (*seq)[i + 1])];
        }
    }
    std::vector<Triple> kept;
    for (const auto& t : corpus) {
        bool frequent = false;
        for (const auto* seq : {&t.context, &t.message, &t.response}) {
            for (std::size_t i = 0; !frequent && i + 1 < seq->size(); ++i) {
                frequent = bigrams[key((*seq)[i], (*seq)[i + 1])] > min_count;
            }
        }
        if (frequent) kept.push_back(t);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Triple files

TripleFile read_triples(std::istream& in, bool strict)
{
    TripleFile file;
    std::unordered_set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        ++file.lines;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;

        auto reject = [&](std::string reason) {
            if (strict) throw ParseError(reason, file.lines);
            file.malformed.push_back({file.lines, std::move(reason)});
        };
        auto cols = detail::split(line, '\t');
        if (cols.size() != 4) {
            reject("expected 4 tab-separated columns, found " + std::to_string(cols.size()));
            continue;
        }
        Triple t{std::string(detail::trim(cols[0])), tokenize(cols[1]), tokenize(cols[2]), tokenize(cols[3])};
        if (t.id.empty()) {
            reject("empty triple id");
            continue;
        }
        if (t.context.empty() || t.message.empty() || t.response.empty()) {
            reject("empty utterance after tokenization");
            continue;
        }
        if (!ids.insert(t.id).second) {
            throw ParseError("duplicate triple id '" + t.id + "'", file.lines);
        }
        file.triples.push_back(std::move(t));
    }
    return file;
}

TripleFile read_triples(const std::filesystem::path& path, bool strict)
{
    auto in = detail::open_input(path);
    return read_triples(in, strict);
}

void write_triples(std::ostream& out, std::span<const Triple> triples)
{
    for (const auto& t : triples) {
        out << t.id << '\t' << join(t.context) << '\t' << join(t.message) << '\t' << join(t.response) << '\n';
    }
}

void write_triples(const std::filesystem::path& path, std::span<const Triple> triples)
{
    auto out = detail::open_output(path);
    write_triples(out, triples);
}

}  // namespace dcgm
