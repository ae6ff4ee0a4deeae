#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dcgm {

using Tokens = std::vector<std::string>;
using WordId = std::int32_t;
using Ids = std::vector<WordId>;

/// One (context, message, response) conversational unit.
struct Triple {
    std::string id;
    Tokens context;
    Tokens message;
    Tokens response;

    bool operator==(const Triple&) const = default;
};

/// Emoticons removed by `tokenize`. Matched case-insensitively against a whole
/// whitespace-delimited chunk, or as a suffix glued to a word ("thanks:)").
std::span<const std::string_view> emoticon_list();

/// Lowercases ASCII, splits on whitespace, drops emoticons and splits every
/// ASCII punctuation character into its own token. An apostrophe between two
/// word characters stays inside the word ("don't"). Bytes >= 0x80 are treated
/// as word characters, so UTF-8 text passes through untouched.
Tokens tokenize(std::string_view raw);

std::string join(const Tokens& tokens, std::string_view sep = " ");

/// Token <-> index map. Indices 0..3 are the reserved markers; regular words
/// follow in order of decreasing corpus frequency (ties: lexicographic).
class Vocabulary {
public:
    static constexpr WordId kStart = 0;
    static constexpr WordId kEnd = 1;
    static constexpr WordId kUnknown = 2;
    /// Utterance boundary inside concatenated context/message/response sequences.
    static constexpr WordId kSeparator = 3;
    static constexpr WordId kNumReserved = 4;

    static constexpr std::string_view kStartToken = "<s>";
    static constexpr std::string_view kEndToken = "</s>";
    static constexpr std::string_view kUnknownToken = "<unk>";
    static constexpr std::string_view kSeparatorToken = "<sep>";

    Vocabulary();

    /// Builds from explicit (token, count) pairs in index order. The first four
    /// entries must be the reserved markers.
    static Vocabulary from_entries(std::vector<std::pair<std::string, std::uint64_t>> entries);

    std::size_t size() const noexcept { return tokens_.size(); }
    WordId id(std::string_view token) const;
    std::optional<WordId> find(std::string_view token) const;
    const std::string& token(WordId id) const;
    std::uint64_t count(WordId id) const { return counts_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

    /// 64-bit FNV-1a over the tokens in index order. Checkpoints store it.
    std::uint64_t hash() const noexcept;

    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(std::istream& in);
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ && counts_ == other.counts_; }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, WordId> index_;
};

/// The `cap` most frequent words of all three utterances plus the reserved
/// markers. Reserved counts feed the noise distribution: the end marker counts
/// one per utterance, the unknown marker absorbs the mass of dropped words, the
/// separator counts two per triple and the start marker is never predicted.
Vocabulary build_vocab(std::span<const Triple> corpus, std::size_t cap);

/// Maps tokens to indices (unknown words to `Vocabulary::kUnknown`). With
/// `frame` the result is wrapped in start/end markers.
Ids encode(const Tokens& tokens, const Vocabulary& vocab, bool frame = false);
Tokens decode(std::span<const WordId> ids, const Vocabulary& vocab);

/// Sparse token-count vector.
class BagOfWords {
public:
    BagOfWords() = default;
    explicit BagOfWords(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    /// Nonzero entries sorted by index.
    const std::vector<std::pair<WordId, double>>& entries() const noexcept { return entries_; }
    double operator[](WordId id) const;
    void add(WordId id, double count = 1.0);
    std::vector<double> dense() const;

    BagOfWords& operator+=(const BagOfWords& other);
    friend BagOfWords operator+(BagOfWords lhs, const BagOfWords& rhs) { return lhs += rhs; }
    bool operator==(const BagOfWords&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::pair<WordId, double>> entries_;
};

/// Raw counts. Throws DimensionError on an id outside [0, dim).
BagOfWords bag_of_words(std::span<const WordId> ids, std::size_t dim);

/// Multiset of contiguous n-token windows.
struct NGramMultiset {
    std::size_t order = 0;
    std::map<Tokens, std::size_t> counts;

    std::size_t total() const;
    std::size_t count(const Tokens& gram) const;
};

NGramMultiset ngrams(const Tokens& tokens, std::size_t n);

/// Keeps the triples with at least one within-utterance bigram whose count over
/// the whole input exceeds `min_count`. Input order is preserved.
std::vector<Triple> filter_triples(std::span<const Triple> corpus, std::size_t min_count = 3);

struct MalformedLine {
    std::size_t line;
    std::string reason;
};

struct TripleFile {
    std::vector<Triple> triples;
    std::vector<MalformedLine> malformed;
    std::size_t lines = 0;
};

/// Reads `id<TAB>context<TAB>message<TAB>response` lines and tokenizes the text
/// columns. With `strict` the first bad line throws ParseError; otherwise bad
/// lines are collected in `malformed`. Blank lines are skipped, duplicate ids
/// always throw.
TripleFile read_triples(std::istream& in, bool strict = true);
TripleFile read_triples(const std::filesystem::path& path, bool strict = true);

/// Writes tokenized triples back in the same four-column layout.
void write_triples(std::ostream& out, std::span<const Triple> triples);
void write_triples(const std::filesystem::path& path, std::span<const Triple> triples);

}  // namespace dcgm
