#include "scoreperf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "scoreperf/errors.hpp"

namespace scoreperf {

namespace {

constexpr char kMagic[9] = "SCPK0001";

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ParseError("checkpoint: truncated length field");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

} // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& meta_json) {
    std::ostringstream index;
    std::uint64_t offset = 0;
    for (const std::string& name : params.names()) {
        const Tensor& t = params.at(name);
        index << name << ' ' << t.rows << ' ' << t.cols << ' ' << offset << '\n';
        offset += t.numel() * sizeof(double);
    }
    std::string index_text = index.str();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os.write(kMagic, 8);
    put_u64(os, index_text.size());
    os.write(index_text.data(), std::streamsize(index_text.size()));
    put_u64(os, meta_json.size());
    os.write(meta_json.data(), std::streamsize(meta_json.size()));
    for (const std::string& name : params.names()) {
        const Tensor& t = params.at(name);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 std::streamsize(t.numel() * sizeof(double)));
    }
    if (!os) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw ParseError("checkpoint: bad magic in " + path);

    std::uint64_t index_len = get_u64(is);
    std::string index_text(index_len, '\0');
    is.read(index_text.data(), std::streamsize(index_len));
    std::uint64_t meta_len = get_u64(is);
    Checkpoint ck;
    ck.meta_json.resize(meta_len);
    is.read(ck.meta_json.data(), std::streamsize(meta_len));
    if (!is) throw ParseError("checkpoint: truncated header in " + path);

    struct Entry {
        std::string name;
        std::size_t rows, cols;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    std::istringstream idx(index_text);
    std::string line;
    while (std::getline(idx, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Entry e;
        if (!(ls >> e.name >> e.rows >> e.cols >> e.offset))
            throw ParseError("checkpoint: bad index line '" + line + "'");
        entries.push_back(std::move(e));
    }

    std::streampos data_start = is.tellg();
    for (const Entry& e : entries) {
        Tensor t(e.rows, e.cols);
        is.seekg(data_start + std::streamoff(e.offset));
        is.read(reinterpret_cast<char*>(t.data.data()),
                std::streamsize(t.numel() * sizeof(double)));
        if (!is) throw ParseError("checkpoint: truncated data for '" + e.name + "'");
        ck.entries.emplace_back(e.name, std::move(t));
    }
    return ck;
}

void load_into(ParamStore& params, const Checkpoint& ck) {
    for (const auto& [name, t] : ck.entries) params.set(name, t);
}

} // namespace scoreperf
