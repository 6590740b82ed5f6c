#include "advrec/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "json.hpp"

namespace advrec {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'R', 'E', 'C', 'K', '1'};

void put_u64(std::string& out, std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint64_t uint(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int b = 0; b < bytes; ++b) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        }
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError("checkpoint: truncated data");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::string encode_indexed(const InteractionMatrix& m, std::size_t user_offset) {
    std::ostringstream out;
    out << "# advrec-indexed users=" << m.n_users() << " items=" << m.n_items() << " offset=" << user_offset
        << '\n';
    write_dataset(out, m, user_offset);
    return out.str();
}

InteractionMatrix decode_indexed(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    unsigned long long users = 0, items = 0, offset = 0;
    bool header = false;
    std::vector<std::pair<std::size_t, ItemId>> pairs;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!header) {
            if (std::sscanf(line.c_str(), "# advrec-indexed users=%llu items=%llu offset=%llu", &users, &items,
                            &offset) != 3) {
                throw ParseError("missing advrec-indexed header", line_no);
            }
            header = true;
            continue;
        }
        std::istringstream fields(line);
        unsigned long long u = 0, i = 0;
        std::string rest;
        if (!(fields >> u >> i) || (fields >> rest)) throw ParseError("expected 'user item'", line_no);
        if (u < offset || u - offset >= users) throw ParseError("user index out of range", line_no);
        if (i >= items) throw ParseError("item index out of range", line_no);
        pairs.emplace_back(static_cast<std::size_t>(u - offset), static_cast<ItemId>(i));
    }
    if (!header) throw ParseError("missing advrec-indexed header", line_no);
    return InteractionMatrix::from_pairs(users, items, pairs);
}

std::string encode_checkpoint(const NamedTables& tables) {
    std::string out(kMagic, sizeof kMagic);
    put_u64(out, tables.size(), 4);
    for (const auto& [name, m] : tables) {
        put_u64(out, name.size(), 4);
        out += name;
        put_u64(out, static_cast<std::uint64_t>(m.rows()), 8);
        put_u64(out, static_cast<std::uint64_t>(m.cols()), 8);
        for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]), 8);
    }
    return out;
}

NamedTables decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.text(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IoError("checkpoint: bad magic");
    NamedTables out;
    const auto count = r.uint(4);
    for (std::uint64_t t = 0; t < count; ++t) {
        auto name = r.text(r.uint(4));
        const auto rows = static_cast<Eigen::Index>(r.uint(8));
        const auto cols = static_cast<Eigen::Index>(r.uint(8));
        if (rows < 0 || cols < 0 || (cols > 0 && static_cast<std::uint64_t>(rows) >
                                                     (bytes.size() / 8) / static_cast<std::uint64_t>(cols))) {
            throw IoError("checkpoint: bad shape for table " + name);
        }
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(r.uint(8));
        out.emplace_back(std::move(name), std::move(m));
    }
    if (!r.done()) throw IoError("checkpoint: trailing bytes");
    return out;
}

void write_checkpoint(const std::filesystem::path& path, const NamedTables& tables, const std::string& model) {
    nlohmann::ordered_json side;
    side["format"] = "ADVRECK1";
    side["model"] = model;
    side["tables"] = nlohmann::ordered_json::array();
    for (const auto& [name, m] : tables) {
        side["tables"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    }
    write_file_atomic(path, encode_checkpoint(tables));
    auto sidecar = path;
    sidecar += ".json";
    write_file_atomic(sidecar, side.dump(2) + "\n");
}

NamedTables read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace advrec
