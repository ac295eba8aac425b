#pragma once

#include "stdnet/tensor.hpp"

#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace stdnet::data {

using Rng = std::mt19937_64;

struct DepthVideo {
    Tensor depth; // (T,h,w,1), centimeters, >= 0 at valid pixels
    Tensor mask;  // (T,h,w,1), 1 valid / 0 invalid

    void validate() const;
};

struct RGBVideo {
    Tensor rgb; // (T,sh,sw,3) in [0,1]
};

// Bicubic 1/s downsampling of GT depth. An LR pixel is valid only when its
// full s x s HR footprint is valid; values are clamped at 0.
DepthVideo synthesize_lr(const DepthVideo& gt, int s);

struct CropResult {
    RGBVideo rgb;
    DepthVideo gt;
    DepthVideo lr;
};

// Spatially aligned random crops: HR window (y, x, hr_crop, hr_crop) with the
// LR window at (y/s, x/s); same window across all frames.
CropResult random_crop_pair(const RGBVideo& rgb, const DepthVideo& gt, const DepthVideo& lr,
                            int hr_crop, int s, Rng& rng);

// ---------------------------------------------------------------------------
// synthetic scenes

struct SceneObject {
    enum class Type { Rect, Disk };
    Type type = Type::Rect;
    Real x = 0, y = 0;        // center at frame 0, pixels
    Real half_w = 8, half_h = 8; // half extents; half_w is the radius for disks
    Real depth_cm = 100;
    Real vx = 0, vy = 0;      // pixels per frame
    std::array<Real, 3> color{0.8, 0.3, 0.3};
};

struct SceneSpec {
    int frames = 8;
    int height = 256;
    int width = 256;
    Real background_depth_cm = 400;
    Real texture_amp = 0.15; // RGB texture contrast
    std::vector<SceneObject> objects;
};

struct SyntheticClip {
    RGBVideo rgb;
    DepthVideo gt;
};

// Background plane plus moving rectangles/disks at constant per-object depth.
// RGB is a textured rendering of object identity, so RGB edges coincide with
// depth edges. All pixels are valid.
SyntheticClip make_synthetic_clip(const SceneSpec& spec);

// Randomized desk-scale scene for training/eval fixtures.
SceneSpec random_scene_spec(int frames, int height, int width, Rng& rng);

SceneSpec scene_spec_from_json_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// clip directory I/O
//
// Layout: manifest.json, rgb/%06d.png (8-bit), lr/%06d.png, gt/%06d.png
// (16-bit grayscale; stored value 0 is reserved for invalid pixels). Depth in
// cm = stored * depth_unit_cm.

struct Clip {
    std::string id;
    int scale = 4;
    Real depth_unit_cm = 0.1;
    RGBVideo rgb;
    DepthVideo lr;
    DepthVideo gt;
};

void save_clip(const std::filesystem::path& dir, const Clip& clip);
Clip load_clip(const std::filesystem::path& manifest_or_dir);

// Writes a depth sequence in the clip's PNG convention under dir/<subdir>/.
void save_depth_frames(const std::filesystem::path& dir, const std::string& subdir,
                       const DepthVideo& d, Real depth_unit_cm);

// Directories under root that contain a manifest.json, sorted by name.
std::vector<std::filesystem::path> find_clips(const std::filesystem::path& root);

} // namespace stdnet::data
