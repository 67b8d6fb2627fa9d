#include "densekit/ingest.hpp"

#include <cstring>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <zlib.h>

#include "densekit/error.hpp"
#include "densekit/float_text.hpp"
#include "densekit/vector.hpp"

namespace densekit {
namespace {

constexpr std::size_t kInputChunk = 64 * 1024;
constexpr std::size_t kOutputChunk = 256 * 1024;

// SAX handler for one record line. Numbers inside "vector" are converted
// from their source text so rounding to float happens exactly once.
class RecordHandler : public nlohmann::json_sax<nlohmann::json> {
public:
    explicit RecordHandler(CorpusRecord& record) : record_(record) {}

    std::string error;
    bool saw_vector = false;

    bool null() override { return scalar("null"); }
    bool boolean(bool) override { return scalar("boolean"); }
    bool number_integer(number_integer_t v) override {
        if (numeric_docid(v)) return true;
        return number(static_cast<float>(v), "integer");
    }
    bool number_unsigned(number_unsigned_t v) override {
        if (numeric_docid(v)) return true;
        return number(static_cast<float>(v), "integer");
    }
    bool number_float(number_float_t, const string_t& text) override {
        auto value = parse_float(text);
        if (!value) return fail(fmt::format("number '{}' is not a finite 32-bit float", text));
        return number(*value, "number");
    }
    bool string(string_t& s) override {
        if (depth_ == 1 && key_ == "docid") {
            record_.docid = std::move(s);
        } else if (depth_ == 1 && key_ == "text") {
            record_.text = std::move(s);
        } else if (in_vector()) {
            return fail("vector contains a string");
        }
        return true;
    }
    bool binary(binary_t&) override { return fail("binary values are not supported"); }

    bool start_object(std::size_t) override {
        if (in_vector()) return fail("vector contains an object");
        ++depth_;
        return true;
    }
    bool key(string_t& k) override {
        if (depth_ == 1) key_ = std::move(k);
        return true;
    }
    bool end_object() override {
        --depth_;
        return true;
    }
    bool start_array(std::size_t) override {
        if (depth_ == 0) return fail("record is not a JSON object");
        if (in_vector()) return fail("vector contains a nested array");
        ++depth_;
        if (depth_ == 2 && key_ == "vector") {
            vector_open_ = true;
            saw_vector = true;
            record_.vector.clear();
        }
        return true;
    }
    bool end_array() override {
        if (in_vector()) vector_open_ = false;
        --depth_;
        return true;
    }
    bool parse_error(std::size_t position, const std::string&, const nlohmann::detail::exception& ex) override {
        return fail(fmt::format("invalid JSON at byte {}: {}", position, ex.what()));
    }

private:
    bool in_vector() const noexcept { return vector_open_ && depth_ == 2; }

    bool scalar(std::string_view what) {
        if (depth_ == 0) return fail("record is not a JSON object");
        if (in_vector()) return fail(fmt::format("vector contains a {}", what));
        return true;
    }
    bool number(float value, std::string_view what) {
        if (in_vector()) {
            record_.vector.push_back(value);
            return true;
        }
        if (depth_ == 1 && key_ == "docid") return fail("docid must be a string or integer");
        return scalar(what);
    }
    // Numeric ids are tolerated and carried as their decimal text.
    template <typename Int>
    bool numeric_docid(Int v) {
        if (depth_ != 1 || key_ != "docid") return false;
        record_.docid = std::to_string(v);
        return true;
    }
    bool fail(std::string message) {
        if (error.empty()) error = std::move(message);
        return false;
    }

    CorpusRecord& record_;
    int depth_ = 0;
    std::string key_;
    bool vector_open_ = false;
};

void append_json_string(std::string& out, const std::string& s) {
    out += nlohmann::json(s).dump();
}

}  // namespace

// Line reader over a raw or gzip byte stream. Concatenated gzip members are
// read as one stream.
class CorpusReader::LineSource {
public:
    LineSource(std::istream& in, Compression compression) : in_(in), input_(kInputChunk) {
        read_input();
        const bool magic = input_len_ >= 2 && static_cast<unsigned char>(input_[0]) == 0x1f &&
                           static_cast<unsigned char>(input_[1]) == 0x8b;
        switch (compression) {
            case Compression::automatic: gzip_ = magic; break;
            case Compression::gzip:
                if (!magic && input_len_ > 0) throw Error(ErrorCode::parse, "input is not gzip-compressed");
                gzip_ = true;
                break;
            case Compression::plain: gzip_ = false; break;
        }
        if (gzip_) {
            output_.resize(kOutputChunk);
            std::memset(&zs_, 0, sizeof zs_);
            if (inflateInit2(&zs_, 16 + MAX_WBITS) != Z_OK) throw Error(ErrorCode::io, "zlib init failed");
            zs_.next_in = reinterpret_cast<Bytef*>(input_.data());
            zs_.avail_in = static_cast<uInt>(input_len_);
        } else {
            plain_len_ = input_len_;
        }
    }

    ~LineSource() {
        if (gzip_) inflateEnd(&zs_);
    }

    bool getline(std::string& line) {
        line.clear();
        bool any = false;
        for (;;) {
            const char* data = gzip_ ? output_.data() : input_.data();
            const std::size_t len = gzip_ ? output_len_ : plain_len_;
            if (pos_ < len) {
                any = true;
                const char* start = data + pos_;
                const void* nl = std::memchr(start, '\n', len - pos_);
                if (nl) {
                    const auto n = static_cast<std::size_t>(static_cast<const char*>(nl) - start);
                    line.append(start, n);
                    pos_ += n + 1;
                    break;
                }
                line.append(start, len - pos_);
                pos_ = len;
            }
            if (!refill()) {
                if (!any) return false;
                break;
            }
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

private:
    void read_input() {
        in_.read(input_.data(), static_cast<std::streamsize>(input_.size()));
        input_len_ = static_cast<std::size_t>(in_.gcount());
        if (in_.bad()) throw Error(ErrorCode::io, "read failed");
    }

    bool refill() {
        pos_ = 0;
        if (!gzip_) {
            read_input();
            plain_len_ = input_len_;
            return plain_len_ > 0;
        }
        for (;;) {
            if (zs_.avail_in == 0) {
                read_input();
                if (input_len_ == 0) {
                    if (member_open_) throw Error(ErrorCode::parse, "gzip stream is truncated");
                    output_len_ = 0;
                    return false;
                }
                zs_.next_in = reinterpret_cast<Bytef*>(input_.data());
                zs_.avail_in = static_cast<uInt>(input_len_);
            }
            zs_.next_out = reinterpret_cast<Bytef*>(output_.data());
            zs_.avail_out = static_cast<uInt>(output_.size());
            member_open_ = true;
            const int rc = inflate(&zs_, Z_NO_FLUSH);
            if (rc == Z_STREAM_END) {
                member_open_ = false;
                inflateReset(&zs_);
            } else if (rc != Z_OK && rc != Z_BUF_ERROR) {
                throw Error(ErrorCode::parse, fmt::format("corrupt gzip data ({})", zs_.msg ? zs_.msg : "inflate error"));
            }
            output_len_ = output_.size() - zs_.avail_out;
            if (output_len_ > 0) return true;
        }
    }

    std::istream& in_;
    bool gzip_ = false;
    std::vector<char> input_;
    std::size_t input_len_ = 0;
    std::size_t plain_len_ = 0;
    std::vector<char> output_;
    std::size_t output_len_ = 0;
    std::size_t pos_ = 0;
    z_stream zs_{};
    bool member_open_ = false;
};

CorpusReader::CorpusReader(std::istream& in, ReadOptions options)
    : source_(std::make_unique<LineSource>(in, options.compression)),
      options_(options),
      dimension_(options.dimension.value_or(0)) {}

CorpusReader::CorpusReader(const std::string& path, ReadOptions options)
    : owned_(std::make_unique<std::ifstream>(path, std::ios::binary)), options_(options),
      dimension_(options.dimension.value_or(0)) {
    if (!*owned_) throw Error(ErrorCode::io, fmt::format("cannot open '{}'", path));
    source_ = std::make_unique<LineSource>(*owned_, options.compression);
}

CorpusReader::~CorpusReader() = default;
CorpusReader::CorpusReader(CorpusReader&&) noexcept = default;

bool CorpusReader::next(CorpusRecord& record) {
    while (source_->getline(line_)) {
        ++line_number_;
        if (line_.find_first_not_of(" \t") == std::string::npos) continue;

        record.docid.clear();
        record.vector.clear();
        record.text.reset();
        RecordHandler handler(record);
        const bool ok = nlohmann::json::sax_parse(line_, &handler);

        std::string problem;
        if (!ok) {
            problem = handler.error.empty() ? "invalid JSON" : handler.error;
        } else if (record.docid.empty()) {
            problem = "missing or empty \"docid\"";
        } else if (options_.require_vector && !handler.saw_vector) {
            problem = "missing \"vector\"";
        } else if (handler.saw_vector && record.vector.empty()) {
            problem = "empty \"vector\"";
        }
        if (!problem.empty()) {
            if (options_.on_bad_record == BadRecordPolicy::skip_and_count) {
                ++bad_records_;
                continue;
            }
            throw Error(ErrorCode::parse, fmt::format("line {}: {}", line_number_, problem));
        }

        if (handler.saw_vector) {
            if (dimension_ == 0) {
                dimension_ = record.vector.size();
            } else if (record.vector.size() != dimension_) {
                throw Error(ErrorCode::dimension_mismatch,
                            fmt::format("line {}: dimension drift: expected {}, found {}", line_number_,
                                        dimension_, record.vector.size()));
            }
        }
        ++records_;
        return true;
    }
    return false;
}

// Output side: buffered, optionally deflated.
class CorpusWriter::Sink {
public:
    Sink(std::ostream& out, bool gzip) : out_(out), gzip_(gzip) {
        if (gzip_) {
            std::memset(&zs_, 0, sizeof zs_);
            if (deflateInit2(&zs_, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                             Z_DEFAULT_STRATEGY) != Z_OK) {
                throw Error(ErrorCode::io, "zlib init failed");
            }
            buffer_.resize(kOutputChunk);
        }
    }
    ~Sink() {
        if (gzip_) deflateEnd(&zs_);
    }

    void write(std::string_view data) {
        if (!gzip_) {
            out_.write(data.data(), static_cast<std::streamsize>(data.size()));
            check();
            return;
        }
        zs_.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
        zs_.avail_in = static_cast<uInt>(data.size());
        while (zs_.avail_in > 0) pump(Z_NO_FLUSH);
    }

    void finish() {
        if (gzip_) {
            zs_.next_in = nullptr;
            zs_.avail_in = 0;
            while (pump(Z_FINISH) != Z_STREAM_END) {
            }
        }
        out_.flush();
        check();
    }

private:
    int pump(int flush) {
        zs_.next_out = reinterpret_cast<Bytef*>(buffer_.data());
        zs_.avail_out = static_cast<uInt>(buffer_.size());
        const int rc = deflate(&zs_, flush);
        if (rc == Z_STREAM_ERROR) throw Error(ErrorCode::io, "deflate failed");
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size() - zs_.avail_out));
        check();
        return rc;
    }
    void check() {
        if (!out_) throw Error(ErrorCode::io, "write failed");
    }

    std::ostream& out_;
    bool gzip_;
    z_stream zs_{};
    std::vector<char> buffer_;
};

CorpusWriter::CorpusWriter(std::ostream& out, bool gzip) : sink_(std::make_unique<Sink>(out, gzip)) {}

CorpusWriter::CorpusWriter(const std::string& path, bool gzip)
    : owned_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc)) {
    if (!*owned_) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", path));
    sink_ = std::make_unique<Sink>(*owned_, gzip);
}

CorpusWriter::~CorpusWriter() {
    if (!finished_) {
        try {
            finish();
        } catch (...) {
        }
    }
}

void CorpusWriter::write(const CorpusRecord& record) {
    if (record.docid.empty()) throw Error(ErrorCode::invalid_argument, "corpus write: empty docid");
    if (!record.vector.empty()) {
        if (dimension_ == 0) dimension_ = record.vector.size();
        if (record.vector.size() != dimension_) {
            throw Error(ErrorCode::dimension_mismatch,
                        fmt::format("corpus write: record '{}' has dimension {}, expected {}", record.docid,
                                    record.vector.size(), dimension_));
        }
        require_finite(record.vector, "corpus write");
    }
    line_.clear();
    line_ += "{\"docid\":";
    append_json_string(line_, record.docid);
    line_ += ",\"vector\":[";
    for (std::size_t i = 0; i < record.vector.size(); ++i) {
        if (i) line_ += ',';
        append_float(line_, record.vector[i]);
    }
    line_ += ']';
    if (record.text) {
        line_ += ",\"text\":";
        append_json_string(line_, *record.text);
    }
    line_ += "}\n";
    sink_->write(line_);
    ++records_;
}

void CorpusWriter::finish() {
    finished_ = true;
    sink_->finish();
    if (owned_) {
        owned_->close();
        if (!*owned_) throw Error(ErrorCode::io, "close failed");
    }
}

std::vector<CorpusRecord> read_corpus(std::istream& in, ReadOptions options) {
    CorpusReader reader(in, options);
    std::vector<CorpusRecord> out;
    CorpusRecord record;
    while (reader.next(record)) out.push_back(record);
    return out;
}

std::vector<CorpusRecord> read_corpus_file(const std::string& path, ReadOptions options) {
    CorpusReader reader(path, options);
    std::vector<CorpusRecord> out;
    CorpusRecord record;
    while (reader.next(record)) out.push_back(record);
    return out;
}

std::size_t write_corpus(std::span<const CorpusRecord> records, std::ostream& out, bool gzip) {
    CorpusWriter writer(out, gzip);
    for (const auto& r : records) writer.write(r);
    writer.finish();
    return writer.records_written();
}

std::size_t write_corpus_file(std::span<const CorpusRecord> records, const std::string& path, bool gzip) {
    CorpusWriter writer(path, gzip);
    for (const auto& r : records) writer.write(r);
    writer.finish();
    return writer.records_written();
}

bool has_gzip_suffix(const std::string& path) {
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

}  // namespace densekit
