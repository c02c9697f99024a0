#include "aptids/flow_ingest.hpp"

#include "aptids/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace aptids {

// Layout: 8-byte magic, u64 header length, JSON header (names + row count),
// then raw little-endian binary64 features, int32 labels, binary64 weights.
namespace {

constexpr char kMagic[8] = {'A', 'P', 'T', 'F', 'L', 'O', 'W', '1'};

static_assert(std::endian::native == std::endian::little, "flow table files are little-endian");

template <typename T>
void write_block(std::ofstream& out, const std::vector<T>& values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
}

template <typename T>
void read_block(std::ifstream& in, std::vector<T>& values, std::size_t count, const std::string& path) {
    values.resize(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) throw Error(ErrorKind::parse, "truncated flow table '" + path + "'");
}

}  // namespace

void write_flow_table(const FlowTable& table, const std::filesystem::path& path) {
    nlohmann::json header = {
        {"feature_names", table.feature_names},
        {"class_names", table.class_names},
        {"rows", table.rows()},
    };
    std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
    out.write(kMagic, sizeof kMagic);
    std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_block(out, table.features);
    std::vector<std::int32_t> labels(table.labels.begin(), table.labels.end());
    write_block(out, labels);
    write_block(out, table.sample_weights);
    if (!out) throw Error(ErrorKind::io, "write failure on '" + path.string() + "'");
}

FlowTable read_flow_table(const std::filesystem::path& path) {
    const std::string name = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + name + "'");

    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw Error(ErrorKind::parse, "'" + name + "' is not a flow table file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1ULL << 32)) throw Error(ErrorKind::parse, "bad header in '" + name + "'");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw Error(ErrorKind::parse, "truncated header in '" + name + "'");

    FlowTable table;
    std::size_t rows = 0;
    try {
        auto header = nlohmann::json::parse(text);
        table.feature_names = header.at("feature_names").get<std::vector<std::string>>();
        table.class_names = header.at("class_names").get<std::vector<std::string>>();
        rows = header.at("rows").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, "bad header in '" + name + "': " + e.what());
    }
    read_block(in, table.features, rows * table.n_features(), name);
    std::vector<std::int32_t> labels;
    read_block(in, labels, rows, name);
    table.labels.assign(labels.begin(), labels.end());
    read_block(in, table.sample_weights, rows, name);
    table.validate();
    return table;
}

}  // namespace aptids
