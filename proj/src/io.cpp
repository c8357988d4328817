#include "ddnet/io.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

namespace ddnet {

namespace {

constexpr std::uint32_t kRouteMagic = 0x53524444;  // "DDRS"
constexpr int kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    check(bool(in), "io: unexpected end of file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& base, const std::vector<Tensor>& tensors,
                     const std::vector<std::string>& names, const nlohmann::json& config) {
    check(tensors.size() == names.size(), "save_checkpoint: names/tensors size mismatch");
    std::ofstream bin(base + ".bin", std::ios::binary);
    check(bool(bin), "save_checkpoint: cannot open " + base + ".bin");
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["config"] = config;
    manifest["tensors"] = nlohmann::json::array();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const Tensor& t = tensors[i];
        bin.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        manifest["tensors"].push_back({{"name", names[i]}, {"shape", t.shape}});
    }
    check(bool(bin), "save_checkpoint: write failed for " + base + ".bin");
    bin.close();
    write_text_file(base + ".json", manifest.dump(2) + "\n");
}

std::vector<Tensor> load_checkpoint(const std::string& base, nlohmann::json* config_out,
                                    std::vector<std::string>* names_out) {
    nlohmann::json manifest = nlohmann::json::parse(read_text_file(base + ".json"));
    check(manifest.at("format_version").get<int>() == kCheckpointVersion,
          "load_checkpoint: unsupported format version");
    if (config_out) *config_out = manifest.value("config", nlohmann::json::object());

    std::ifstream bin(base + ".bin", std::ios::binary);
    check(bool(bin), "load_checkpoint: cannot open " + base + ".bin");
    std::vector<Tensor> tensors;
    if (names_out) names_out->clear();
    for (const auto& entry : manifest.at("tensors")) {
        std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        Tensor t = Tensor::zeros(shape);
        bin.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        check(bool(bin), "load_checkpoint: truncated " + base + ".bin");
        tensors.push_back(std::move(t));
        if (names_out) names_out->push_back(entry.at("name").get<std::string>());
    }
    char extra;
    bin.read(&extra, 1);
    check(bin.eof(), "load_checkpoint: trailing bytes in " + base + ".bin");
    return tensors;
}

nlohmann::json norm_stats_to_json(const NormStats& stats) {
    return {{"lo", stats.lo.data}, {"hi", stats.hi.data}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
    NormStats stats;
    stats.lo = Tensor::vector(j.at("lo").get<std::vector<double>>());
    stats.hi = Tensor::vector(j.at("hi").get<std::vector<double>>());
    return stats;
}

void save_route_dataset(const std::vector<RouteSample>& rs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    check(bool(out), "save_route_dataset: cannot open " + path);
    write_pod(out, kRouteMagic);
    write_pod(out, std::uint32_t{1});
    write_pod(out, std::uint64_t(rs.size()));
    write_pod(out, std::uint32_t(rs.empty() ? 0 : rs.front().input.size()));
    for (const RouteSample& s : rs) {
        check(rs.empty() || s.input.size() == rs.front().input.size(),
              "save_route_dataset: inconsistent input widths");
        out.write(reinterpret_cast<const char*>(s.input.data.data()),
                  static_cast<std::streamsize>(s.input.size() * sizeof(double)));
        write_pod(out, std::uint8_t(s.label));
        write_pod(out, std::int32_t(s.be_id));
        write_pod(out, std::int32_t(s.be_oa));
    }
    check(bool(out), "save_route_dataset: write failed for " + path);
}

std::vector<RouteSample> load_route_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(bool(in), "load_route_dataset: cannot open " + path);
    check(read_pod<std::uint32_t>(in) == kRouteMagic, "load_route_dataset: bad magic");
    check(read_pod<std::uint32_t>(in) == 1, "load_route_dataset: unsupported version");
    std::uint64_t count = read_pod<std::uint64_t>(in);
    std::uint32_t width = read_pod<std::uint32_t>(in);
    std::vector<RouteSample> rs;
    rs.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        RouteSample s;
        s.input = Tensor::zeros({width});
        in.read(reinterpret_cast<char*>(s.input.data.data()),
                static_cast<std::streamsize>(width * sizeof(double)));
        s.label = read_pod<std::uint8_t>(in);
        s.be_id = read_pod<std::int32_t>(in);
        s.be_oa = read_pod<std::int32_t>(in);
        check(bool(in), "load_route_dataset: truncated " + path);
        rs.push_back(std::move(s));
    }
    return rs;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    check(bool(in), "read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    check(bool(out), "write_text_file: cannot open " + path);
    out << content;
    check(bool(out), "write_text_file: write failed for " + path);
}

}  // namespace ddnet
