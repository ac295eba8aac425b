#include "stdnet/data.hpp"
#include "stdnet/kernels.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace stdnet::data {

namespace fs = std::filesystem;
using nlohmann::json;

void DepthVideo::validate() const {
    require(depth.shape() == mask.shape(), "DepthVideo: mask dims " + mask.shape().str() +
                                               " != depth dims " + depth.shape().str());
    require(depth.c() == 1, "DepthVideo: depth must be single-channel");
    for (std::size_t i = 0; i < depth.numel(); ++i)
        if (mask[i] > 0.0)
            require(std::isfinite(depth[i]) && depth[i] >= 0.0,
                    "DepthVideo: valid pixel with non-finite or negative depth");
}

DepthVideo synthesize_lr(const DepthVideo& gt, int s) {
    require(s >= 1, "synthesize_lr: scale must be positive");
    require(gt.depth.h() % s == 0 && gt.depth.w() % s == 0,
            "synthesize_lr: GT dims " + gt.depth.shape().str() + " not divisible by s=" +
                std::to_string(s));
    DepthVideo lr;
    lr.depth = kernels::resize_forward(gt.depth, gt.depth.h() / s, gt.depth.w() / s,
                                       kernels::Interp::Bicubic);
    for (std::size_t i = 0; i < lr.depth.numel(); ++i)
        lr.depth[i] = std::max(lr.depth[i], 0.0);
    lr.mask = Tensor(lr.depth.shape(), 1.0);
    for (int t = 0; t < lr.depth.t(); ++t)
        for (int y = 0; y < lr.depth.h(); ++y)
            for (int x = 0; x < lr.depth.w(); ++x) {
                bool all_valid = true;
                for (int dy = 0; dy < s && all_valid; ++dy)
                    for (int dx = 0; dx < s && all_valid; ++dx)
                        all_valid = gt.mask.at(t, y * s + dy, x * s + dx, 0) > 0.0;
                if (!all_valid) lr.mask.at(t, y, x, 0) = 0.0;
            }
    return lr;
}

namespace {

Tensor crop(const Tensor& x, int y0, int x0, int ch, int cw) {
    Tensor out(x.t(), ch, cw, x.c());
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < ch; ++y)
            for (int xx = 0; xx < cw; ++xx)
                for (int c = 0; c < x.c(); ++c)
                    out.at(t, y, xx, c) = x.at(t, y0 + y, x0 + xx, c);
    return out;
}

} // namespace

CropResult random_crop_pair(const RGBVideo& rgb, const DepthVideo& gt, const DepthVideo& lr,
                            int hr_crop, int s, Rng& rng) {
    require(hr_crop % s == 0, "random_crop_pair: hr_crop " + std::to_string(hr_crop) +
                                  " not divisible by s=" + std::to_string(s));
    require(hr_crop <= gt.depth.h() && hr_crop <= gt.depth.w(),
            "random_crop_pair: crop larger than frame");
    require(gt.depth.h() == rgb.rgb.h() && gt.depth.w() == rgb.rgb.w(),
            "random_crop_pair: GT/RGB dims mismatch");
    require(lr.depth.h() * s == gt.depth.h() && lr.depth.w() * s == gt.depth.w(),
            "random_crop_pair: LR dims inconsistent with scale");
    const int lc = hr_crop / s;
    std::uniform_int_distribution<int> dy(0, lr.depth.h() - lc), dx(0, lr.depth.w() - lc);
    const int ly = dy(rng), lx = dx(rng);
    CropResult out;
    out.rgb.rgb = crop(rgb.rgb, ly * s, lx * s, hr_crop, hr_crop);
    out.gt.depth = crop(gt.depth, ly * s, lx * s, hr_crop, hr_crop);
    out.gt.mask = crop(gt.mask, ly * s, lx * s, hr_crop, hr_crop);
    out.lr.depth = crop(lr.depth, ly, lx, lc, lc);
    out.lr.mask = crop(lr.mask, ly, lx, lc, lc);
    return out;
}

// ---------------------------------------------------------------------------
// synthetic scenes

namespace {

bool inside(const SceneObject& o, Real px, Real py, int t) {
    const Real cx = o.x + o.vx * t, cy = o.y + o.vy * t;
    if (o.type == SceneObject::Type::Rect)
        return std::abs(px - cx) <= o.half_w && std::abs(py - cy) <= o.half_h;
    const Real dx = px - cx, dy = py - cy;
    return dx * dx + dy * dy <= o.half_w * o.half_w;
}

Real texture(Real x, Real y, int phase) {
    return std::sin(0.37 * x + 0.11 * phase) * std::cos(0.29 * y - 0.07 * phase);
}

} // namespace

SyntheticClip make_synthetic_clip(const SceneSpec& spec) {
    require(spec.frames >= 3, "make_synthetic_clip: need T >= 3, got " +
                                  std::to_string(spec.frames));
    require(spec.height >= 1 && spec.width >= 1, "make_synthetic_clip: bad dims");
    SyntheticClip clip;
    clip.gt.depth = Tensor(spec.frames, spec.height, spec.width, 1);
    clip.gt.mask = Tensor(spec.frames, spec.height, spec.width, 1, 1.0);
    clip.rgb.rgb = Tensor(spec.frames, spec.height, spec.width, 3);

    const std::array<Real, 3> bg_color{0.45, 0.5, 0.55};
    for (int t = 0; t < spec.frames; ++t)
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                Real d = spec.background_depth_cm;
                std::array<Real, 3> col = bg_color;
                // later objects occlude earlier ones
                for (std::size_t i = 0; i < spec.objects.size(); ++i)
                    if (inside(spec.objects[i], (Real)x, (Real)y, t)) {
                        d = spec.objects[i].depth_cm;
                        col = spec.objects[i].color;
                    }
                const Real tex = spec.texture_amp * texture((Real)x, (Real)y, 0);
                clip.gt.depth.at(t, y, x, 0) = d;
                for (int c = 0; c < 3; ++c)
                    clip.rgb.rgb.at(t, y, x, c) = std::clamp(col[c] + tex, 0.0, 1.0);
            }
    return clip;
}

SceneSpec random_scene_spec(int frames, int height, int width, Rng& rng) {
    SceneSpec spec;
    spec.frames = frames;
    spec.height = height;
    spec.width = width;
    std::uniform_real_distribution<Real> bg(250.0, 500.0), depth(60.0, 220.0),
        vel(-2.0, 2.0), col(0.1, 0.9), pos_y(0.2 * height, 0.8 * height),
        pos_x(0.2 * width, 0.8 * width), sz(0.08 * std::min(height, width),
                                            0.22 * std::min(height, width));
    std::uniform_int_distribution<int> nobj(2, 4), kind(0, 1);
    spec.background_depth_cm = bg(rng);
    const int n = nobj(rng);
    for (int i = 0; i < n; ++i) {
        SceneObject o;
        o.type = kind(rng) ? SceneObject::Type::Disk : SceneObject::Type::Rect;
        o.x = pos_x(rng);
        o.y = pos_y(rng);
        o.half_w = sz(rng);
        o.half_h = sz(rng);
        o.depth_cm = depth(rng);
        o.vx = vel(rng);
        o.vy = vel(rng);
        o.color = {col(rng), col(rng), col(rng)};
        spec.objects.push_back(o);
    }
    return spec;
}

SceneSpec scene_spec_from_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scene spec: cannot open " + path.string());
    json j = json::parse(in);
    SceneSpec spec;
    spec.frames = j.value("frames", spec.frames);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.background_depth_cm = j.value("background_depth_cm", spec.background_depth_cm);
    spec.texture_amp = j.value("texture_amp", spec.texture_amp);
    for (const auto& jo : j.value("objects", json::array())) {
        SceneObject o;
        o.type = jo.value("type", std::string("rect")) == "disk" ? SceneObject::Type::Disk
                                                                 : SceneObject::Type::Rect;
        o.x = jo.value("x", o.x);
        o.y = jo.value("y", o.y);
        o.half_w = jo.value("half_w", o.half_w);
        o.half_h = jo.value("half_h", o.half_h);
        o.depth_cm = jo.value("depth_cm", o.depth_cm);
        o.vx = jo.value("vx", o.vx);
        o.vy = jo.value("vy", o.vy);
        if (jo.contains("color")) {
            auto c = jo["color"];
            o.color = {c.at(0).get<Real>(), c.at(1).get<Real>(), c.at(2).get<Real>()};
        }
        spec.objects.push_back(o);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// PNG / manifest I/O

namespace {

std::string frame_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.png", i);
    return buf;
}

void write_depth_png(const fs::path& path, const Tensor& depth, const Tensor& mask, int t,
                     Real unit) {
    cv::Mat img(depth.h(), depth.w(), CV_16UC1);
    for (int y = 0; y < depth.h(); ++y)
        for (int x = 0; x < depth.w(); ++x) {
            std::uint16_t v = 0;
            if (mask.at(t, y, x, 0) > 0.0) {
                const long stored = std::lround(depth.at(t, y, x, 0) / unit);
                v = (std::uint16_t)std::clamp(stored, 1l, 65535l);
            }
            img.at<std::uint16_t>(y, x) = v;
        }
    if (!cv::imwrite(path.string(), img))
        throw std::runtime_error("save_clip: failed to write " + path.string());
}

void read_depth_png(const fs::path& path, Tensor& depth, Tensor& mask, int t, Real unit) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (img.empty()) throw std::runtime_error("load_clip: cannot read " + path.string());
    if (img.type() != CV_16UC1)
        throw std::runtime_error("load_clip: " + path.string() + " is not 16-bit grayscale");
    require(img.rows == depth.h() && img.cols == depth.w(),
            "load_clip: frame dims of " + path.string() + " do not match manifest");
    for (int y = 0; y < depth.h(); ++y)
        for (int x = 0; x < depth.w(); ++x) {
            const std::uint16_t v = img.at<std::uint16_t>(y, x);
            depth.at(t, y, x, 0) = v * unit;
            mask.at(t, y, x, 0) = v == 0 ? 0.0 : 1.0;
        }
}

void write_rgb_png(const fs::path& path, const Tensor& rgb, int t) {
    cv::Mat img(rgb.h(), rgb.w(), CV_8UC3);
    for (int y = 0; y < rgb.h(); ++y)
        for (int x = 0; x < rgb.w(); ++x) {
            auto& px = img.at<cv::Vec3b>(y, x);
            // OpenCV stores BGR
            for (int c = 0; c < 3; ++c)
                px[2 - c] = (std::uint8_t)std::lround(
                    std::clamp(rgb.at(t, y, x, c), 0.0, 1.0) * 255.0);
        }
    if (!cv::imwrite(path.string(), img))
        throw std::runtime_error("save_clip: failed to write " + path.string());
}

void read_rgb_png(const fs::path& path, Tensor& rgb, int t) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw std::runtime_error("load_clip: cannot read " + path.string());
    require(img.rows == rgb.h() && img.cols == rgb.w(),
            "load_clip: frame dims of " + path.string() + " do not match manifest");
    for (int y = 0; y < rgb.h(); ++y)
        for (int x = 0; x < rgb.w(); ++x) {
            const auto& px = img.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c) rgb.at(t, y, x, c) = px[2 - c] / 255.0;
        }
}

} // namespace

void save_depth_frames(const fs::path& dir, const std::string& subdir, const DepthVideo& d,
                       Real depth_unit_cm) {
    fs::create_directories(dir / subdir);
    for (int t = 0; t < d.depth.t(); ++t)
        write_depth_png(dir / subdir / frame_name(t), d.depth, d.mask, t, depth_unit_cm);
}

void save_clip(const fs::path& dir, const Clip& clip) {
    clip.gt.validate();
    clip.lr.validate();
    require(clip.rgb.rgb.t() == clip.gt.depth.t() && clip.lr.depth.t() == clip.gt.depth.t(),
            "save_clip: frame count mismatch between streams");
    fs::create_directories(dir / "rgb");
    save_depth_frames(dir, "lr", clip.lr, clip.depth_unit_cm);
    save_depth_frames(dir, "gt", clip.gt, clip.depth_unit_cm);
    json m;
    m["id"] = clip.id;
    m["frames"] = clip.gt.depth.t();
    m["scale"] = clip.scale;
    m["depth_unit_cm"] = clip.depth_unit_cm;
    json rgb_list = json::array(), lr_list = json::array(), gt_list = json::array();
    for (int t = 0; t < clip.gt.depth.t(); ++t) {
        write_rgb_png(dir / "rgb" / frame_name(t), clip.rgb.rgb, t);
        rgb_list.push_back("rgb/" + frame_name(t));
        lr_list.push_back("lr/" + frame_name(t));
        gt_list.push_back("gt/" + frame_name(t));
    }
    m["rgb"] = rgb_list;
    m["lr"] = lr_list;
    m["gt"] = gt_list;
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << "\n";
    if (!out) throw std::runtime_error("save_clip: failed to write manifest in " + dir.string());
}

Clip load_clip(const fs::path& manifest_or_dir) {
    fs::path mpath = manifest_or_dir;
    if (fs::is_directory(mpath)) mpath /= "manifest.json";
    std::ifstream in(mpath);
    if (!in) throw std::runtime_error("load_clip: cannot open " + mpath.string());
    json m = json::parse(in);
    const fs::path dir = mpath.parent_path();

    Clip clip;
    clip.id = m.value("id", dir.filename().string());
    clip.scale = m.at("scale").get<int>();
    clip.depth_unit_cm = m.at("depth_unit_cm").get<Real>();
    const int T = m.at("frames").get<int>();
    require(clip.scale == 4 || clip.scale == 8 || clip.scale == 16,
            "load_clip: scale must be 4, 8 or 16");
    auto rgb_list = m.at("rgb"), lr_list = m.at("lr"), gt_list = m.at("gt");
    require((int)rgb_list.size() == T && (int)lr_list.size() == T && (int)gt_list.size() == T,
            "load_clip: frame list lengths do not match frame count in " + mpath.string());

    for (const auto& list : {rgb_list, lr_list, gt_list})
        for (const auto& f : list) {
            const fs::path p = dir / f.get<std::string>();
            if (!fs::exists(p))
                throw std::runtime_error("load_clip: missing frame file " + p.string());
        }

    // Probe first frames for dims.
    cv::Mat probe_gt = cv::imread((dir / gt_list[0].get<std::string>()).string(),
                                  cv::IMREAD_UNCHANGED);
    cv::Mat probe_lr = cv::imread((dir / lr_list[0].get<std::string>()).string(),
                                  cv::IMREAD_UNCHANGED);
    if (probe_gt.empty() || probe_lr.empty())
        throw std::runtime_error("load_clip: cannot read first depth frames in " + dir.string());
    clip.gt.depth = Tensor(T, probe_gt.rows, probe_gt.cols, 1);
    clip.gt.mask = Tensor(clip.gt.depth.shape());
    clip.lr.depth = Tensor(T, probe_lr.rows, probe_lr.cols, 1);
    clip.lr.mask = Tensor(clip.lr.depth.shape());
    clip.rgb.rgb = Tensor(T, probe_gt.rows, probe_gt.cols, 3);
    require(clip.lr.depth.h() * clip.scale == clip.gt.depth.h() &&
                clip.lr.depth.w() * clip.scale == clip.gt.depth.w(),
            "load_clip: LR dims inconsistent with scale in " + mpath.string());

    for (int t = 0; t < T; ++t) {
        read_depth_png(dir / gt_list[t].get<std::string>(), clip.gt.depth, clip.gt.mask, t,
                       clip.depth_unit_cm);
        read_depth_png(dir / lr_list[t].get<std::string>(), clip.lr.depth, clip.lr.mask, t,
                       clip.depth_unit_cm);
        read_rgb_png(dir / rgb_list[t].get<std::string>(), clip.rgb.rgb, t);
    }
    return clip;
}

std::vector<fs::path> find_clips(const fs::path& root) {
    std::vector<fs::path> out;
    if (fs::exists(root / "manifest.json")) {
        out.push_back(root);
        return out;
    }
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace stdnet::data
