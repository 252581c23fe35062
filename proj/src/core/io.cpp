#include "io.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "errors.hpp"

namespace xmbt::io {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw RuntimeFailure("cannot create directory " + path + ": " + ec.message());
}

bool exists(const std::string& path) { return fs::exists(path); }

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

constexpr char kParamsMagic[8] = {'X', 'M', 'B', 'T', 'P', 'G', '0', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::string group_path(const std::string& dir, const std::string& group) { return dir + "/" + group + ".params"; }

}  // namespace

void save_groups(const std::string& dir, const std::vector<ParamGroup*>& groups) {
    ensure_dir(dir);
    for (const ParamGroup* g : groups) {
        std::ofstream out(group_path(dir, g->name), std::ios::binary);
        if (!out) throw RuntimeFailure("cannot write checkpoint for group " + g->name);
        out.write(kParamsMagic, sizeof(kParamsMagic));
        put<uint64_t>(out, g->vars.size());
        for (size_t i = 0; i < g->vars.size(); ++i) {
            const std::string& name = g->names[i];
            const Tensor& t = g->vars[i]->val;
            put<uint32_t>(out, static_cast<uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put<uint32_t>(out, static_cast<uint32_t>(t.shape().size()));
            for (int64_t d : t.shape()) put<int64_t>(out, d);
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(Scalar)));
        }
    }
}

void load_groups(const std::string& dir, const std::vector<ParamGroup*>& groups) {
    for (ParamGroup* g : groups) {
        std::string path = group_path(dir, g->name);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DependencyError("missing checkpoint file " + path);
        char magic[8];
        in.read(magic, 8);
        if (std::memcmp(magic, kParamsMagic, 8) != 0) throw RuntimeFailure("bad checkpoint magic in " + path);
        uint64_t count = get<uint64_t>(in);
        if (count != g->vars.size())
            throw RuntimeFailure("checkpoint " + path + " holds " + std::to_string(count) + " params, expected " +
                                 std::to_string(g->vars.size()));
        for (size_t i = 0; i < count; ++i) {
            uint32_t name_len = get<uint32_t>(in);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            if (name != g->names[i])
                throw RuntimeFailure("checkpoint " + path + ": parameter '" + name + "' does not match '" +
                                     g->names[i] + "'");
            uint32_t ndim = get<uint32_t>(in);
            Shape shape(ndim);
            for (uint32_t d = 0; d < ndim; ++d) shape[d] = get<int64_t>(in);
            if (shape != g->vars[i]->val.shape())
                throw RuntimeFailure("checkpoint " + path + ": shape mismatch for " + name +
                                     " (model was built from a different config)");
            in.read(reinterpret_cast<char*>(g->vars[i]->val.data()),
                    static_cast<std::streamsize>(g->vars[i]->val.numel() * sizeof(Scalar)));
        }
        if (!in) throw RuntimeFailure("truncated checkpoint " + path);
    }
}

bool groups_present(const std::string& dir, const std::vector<ParamGroup*>& groups) {
    for (const ParamGroup* g : groups)
        if (!fs::exists(group_path(dir, g->name))) return false;
    return true;
}

void save_clip(const std::string& base_path, const VideoClip& clip) {
    json meta;
    meta["shape"] = {clip.t(), clip.h(), clip.w(), clip.c()};
    meta["dtype"] = "float32";
    meta["frame_rate"] = clip.frame_rate;
    write_text_file(base_path + ".json", meta.dump(2) + "\n");
    std::ofstream out(base_path + ".bin", std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write clip " + base_path + ".bin");
    std::vector<float> buf(static_cast<size_t>(clip.frames.numel()));
    for (int64_t i = 0; i < clip.frames.numel(); ++i)
        buf[static_cast<size_t>(i)] = static_cast<float>(std::clamp(clip.frames.at(i), 0.0, 1.0));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

VideoClip load_clip(const std::string& base_path) {
    json meta;
    try {
        meta = json::parse(read_text_file(base_path + ".json"));
    } catch (const json::exception& e) {
        throw UsageError("malformed clip sidecar " + base_path + ".json: " + e.what());
    }
    if (!meta.contains("shape") || !meta["shape"].is_array() || meta["shape"].size() != 4)
        throw UsageError("malformed clip sidecar " + base_path + ".json: missing 4-d shape");
    if (meta.value("dtype", "") != "float32")
        throw UsageError("clip " + base_path + ": unsupported dtype '" + meta.value("dtype", "") + "'");
    Shape shape;
    for (const auto& d : meta["shape"]) {
        int64_t v = d.get<int64_t>();
        if (v < 1) throw UsageError("clip " + base_path + ": non-positive extent in shape");
        shape.push_back(v);
    }
    VideoClip clip;
    clip.frame_rate = meta.value("frame_rate", 25.0);
    clip.frames = Tensor(shape);
    std::ifstream in(base_path + ".bin", std::ios::binary);
    if (!in) throw UsageError("missing clip data " + base_path + ".bin");
    std::vector<float> buf(static_cast<size_t>(clip.frames.numel()));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw UsageError("clip " + base_path + ".bin is shorter than its declared shape");
    for (int64_t i = 0; i < clip.frames.numel(); ++i) clip.frames.at(i) = static_cast<double>(buf[static_cast<size_t>(i)]);
    return clip;
}

void save_token_lines(const std::string& path, const std::vector<std::vector<int>>& seqs) {
    std::ostringstream os;
    for (const auto& seq : seqs) {
        for (size_t i = 0; i < seq.size(); ++i) {
            if (i) os << " ";
            os << seq[i];
        }
        os << "\n";
    }
    write_text_file(path, os.str());
}

void write_series_ppm(const std::string& path, const std::vector<std::vector<double>>& series, int width, int height) {
    std::vector<unsigned char> img(static_cast<size_t>(width * height * 3), 255);
    double lo = 1e300, hi = -1e300;
    size_t longest = 0;
    for (const auto& s : series)
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (const auto& s : series) longest = std::max(longest, s.size());
    if (longest < 2 || hi <= lo) {
        lo = 0;
        hi = 1;
    }
    const unsigned char palette[4][3] = {{200, 40, 40}, {40, 90, 200}, {30, 150, 60}, {150, 60, 180}};
    auto draw = [&](int x, int y, const unsigned char* rgb) {
        if (x < 0 || x >= width || y < 0 || y >= height) return;
        size_t p = static_cast<size_t>((y * width + x) * 3);
        img[p] = rgb[0];
        img[p + 1] = rgb[1];
        img[p + 2] = rgb[2];
    };
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.size() < 2) continue;
        const unsigned char* rgb = palette[si % 4];
        for (size_t i = 0; i + 1 < s.size(); ++i) {
            double x0 = static_cast<double>(i) / static_cast<double>(longest - 1) * (width - 1);
            double x1 = static_cast<double>(i + 1) / static_cast<double>(longest - 1) * (width - 1);
            double y0 = (1.0 - (s[i] - lo) / (hi - lo)) * (height - 1);
            double y1 = (1.0 - (s[i + 1] - lo) / (hi - lo)) * (height - 1);
            int steps = std::max(2, static_cast<int>(std::abs(x1 - x0) + std::abs(y1 - y0)) + 1);
            for (int k = 0; k <= steps; ++k) {
                double a = static_cast<double>(k) / steps;
                draw(static_cast<int>(x0 + a * (x1 - x0)), static_cast<int>(y0 + a * (y1 - y0)), rgb);
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write plot " + path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace xmbt::io
