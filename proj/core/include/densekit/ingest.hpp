#pragma once

#include <cstddef>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace densekit {

/// One line of a corpus or query file:
///   {"docid": "...", "vector": [0.1, ...], "text": "..."}
/// Unknown keys are ignored. Query files use the same shape with the query
/// id in "docid".
struct CorpusRecord {
    std::string docid;
    std::vector<float> vector;
    std::optional<std::string> text;

    friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

enum class Compression {
    automatic,  // sniff the gzip magic bytes on read; write plain
    gzip,
    plain,
};

enum class BadRecordPolicy { fail_fast, skip_and_count };

struct ReadOptions {
    Compression compression = Compression::automatic;
    BadRecordPolicy on_bad_record = BadRecordPolicy::fail_fast;
    /// When unset the first record fixes the dimension.
    std::optional<std::size_t> dimension;
    /// Text-only inputs (for embedding) set this to false.
    bool require_vector = true;
};

/// Pull-based reader; holds at most one decoded line plus fixed-size
/// decompression buffers regardless of file size.
class CorpusReader {
public:
    CorpusReader(std::istream& in, ReadOptions options = {});
    CorpusReader(const std::string& path, ReadOptions options = {});
    ~CorpusReader();
    CorpusReader(CorpusReader&&) noexcept;

    /// Reads the next valid record; false at end of input. Malformed lines
    /// throw Error{parse} (or are skipped and counted, per policy); a vector
    /// whose length differs from the established dimension always throws
    /// Error{dimension_mismatch}.
    bool next(CorpusRecord& record);

    std::size_t line_number() const noexcept { return line_number_; }
    std::size_t records_read() const noexcept { return records_; }
    std::size_t bad_records() const noexcept { return bad_records_; }
    /// Zero until the first vector has been seen.
    std::size_t dimension() const noexcept { return dimension_; }

private:
    class LineSource;

    std::unique_ptr<std::ifstream> owned_;
    std::unique_ptr<LineSource> source_;
    ReadOptions options_;
    std::string line_;
    std::size_t line_number_ = 0;
    std::size_t records_ = 0;
    std::size_t bad_records_ = 0;
    std::size_t dimension_ = 0;
};

/// Writes one record per line with shortest round-trip float formatting.
class CorpusWriter {
public:
    CorpusWriter(std::ostream& out, bool gzip);
    CorpusWriter(const std::string& path, bool gzip);
    ~CorpusWriter();

    void write(const CorpusRecord& record);
    /// Flushes and, for gzip, writes the stream trailer. Called by the
    /// destructor if needed, but only an explicit call reports errors.
    void finish();
    std::size_t records_written() const noexcept { return records_; }

private:
    class Sink;

    std::unique_ptr<std::ofstream> owned_;
    std::unique_ptr<Sink> sink_;
    std::string line_;
    std::size_t records_ = 0;
    std::size_t dimension_ = 0;
    bool finished_ = false;
};

/// Convenience wrappers over the streaming classes.
std::vector<CorpusRecord> read_corpus(std::istream& in, ReadOptions options = {});
std::vector<CorpusRecord> read_corpus_file(const std::string& path, ReadOptions options = {});
std::size_t write_corpus(std::span<const CorpusRecord> records, std::ostream& out, bool gzip);
std::size_t write_corpus_file(std::span<const CorpusRecord> records, const std::string& path, bool gzip);

/// True when the path ends in ".gz".
bool has_gzip_suffix(const std::string& path);

}  // namespace densekit
