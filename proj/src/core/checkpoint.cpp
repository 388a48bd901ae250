#include "core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/errors.hpp"

namespace usrob::model {

namespace {

constexpr char kMagic[4] = {'U', 'R', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
public:
    Reader(const std::string& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == buf_.size(); }

private:
    unsigned char byte() { return static_cast<unsigned char>(buf_[pos_++]); }

    void need(std::size_t n) {
        if (pos_ + n > buf_.size()) {
            throw IoError("truncated checkpoint file: " + path_.string());
        }
    }

    const std::string& buf_;
    std::filesystem::path path_;
    std::size_t pos_ = 0;
};

void put_array(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(0);  // dtype f64
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
}

std::pair<std::string, Tensor> read_array(Reader& r, const std::filesystem::path& path) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::string dtype = r.bytes(1);
    if (dtype[0] != 0) throw IoError("unsupported dtype in checkpoint: " + path.string());
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
    return {std::move(name), std::move(t)};
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {
        {"architecture", std::string(architecture_name(c.architecture))},
        {"input_height", c.input_height},
        {"input_width", c.input_width},
        {"num_classes", c.num_classes},
        {"channel_mult", c.channel_mult},
        {"width_mult", c.width_mult},
        {"seed", c.seed},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    c.input_height = j.at("input_height").get<std::size_t>();
    c.input_width = j.at("input_width").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.channel_mult = j.value("channel_mult", std::size_t{1});
    c.width_mult = j.value("width_mult", std::size_t{1});
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::json& meta, const NamedTensors& extra_arrays) {
    nlohmann::json header = {
        {"model_config", model_config_to_json(params.config)},
        {"meta", meta},
        {"num_model_arrays", params.weights.size()},
    };
    const std::string header_str = header.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, header_str.size());
    out.append(header_str);
    put_u32(out, static_cast<std::uint32_t>(params.weights.size() + extra_arrays.size()));
    for (const auto& [name, t] : params.weights) put_array(out, name, t);
    for (const auto& [name, t] : extra_arrays) put_array(out, name, t);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot open checkpoint: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(buf, path);
    if (r.bytes(4) != std::string(kMagic, 4)) {
        throw IoError("not a checkpoint file: " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t header_len = r.u64();
    nlohmann::json header = nlohmann::json::parse(r.bytes(header_len));

    Checkpoint ck;
    ck.params.config = model_config_from_json(header.at("model_config"));
    ck.meta = header.value("meta", nlohmann::json::object());

    const std::size_t num_model = header.at("num_model_arrays").get<std::size_t>();
    const std::uint32_t total = r.u32();
    for (std::uint32_t i = 0; i < total; ++i) {
        auto arr = read_array(r, path);
        if (i < num_model) {
            ck.params.weights.push_back(std::move(arr));
        } else {
            ck.extra_arrays.push_back(std::move(arr));
        }
    }
    if (!r.done()) throw IoError("trailing bytes in checkpoint: " + path.string());
    return ck;
}

}  // namespace usrob::model
