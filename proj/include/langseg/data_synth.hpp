#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langseg/tensor.hpp"
#include "langseg/text_encoder.hpp"

namespace langseg {

enum class ShapeKind { circle = 0, square = 1, triangle = 2 };
enum class ColorKind { red = 0, green = 1, blue = 2, yellow = 3 };
enum class Scenario { clean, occluded, cluttered, lowres };

inline constexpr std::size_t kNumClasses = 13;  // background + 3 shapes x 4 colors

std::size_t class_id(ShapeKind shape, ColorKind color);  // 1 + 4*shape + color
const std::vector<std::string>& class_names();           // 13 entries
const char* scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);  // DataError on unknown tag

struct SceneObject {
  ShapeKind shape;
  ColorKind color;
  long cx, cy;  // integer center
  long size;    // half-extent in pixels
};

struct SceneSpec {
  std::uint64_t seed;
  std::size_t height, width;
  std::vector<SceneObject> objects;  // draw order; later entries occlude earlier
};

struct SegSample {
  Tensor image;  // [3 x H x W] in [0,1]
  Tensor mask;   // [H x W] of class ids
  std::string prompt;
  Scenario scenario;
  std::uint64_t seed;
};

// Exact integer point-in-shape test at pixel (x, y).
bool point_in_object(const SceneObject& obj, long x, long y);

// Object layout is a pure function of (seed, canvas); the scenario only
// perturbs the rendered image, so clean/occluded/... pairs share geometry.
SceneSpec make_scene_spec(std::uint64_t seed, std::size_t height,
                          std::size_t width);

// "a scene with <color> <shape>", a spatial clause for the first pair when
// two or more objects are present, comma-joined tail.
std::string render_prompt(const SceneSpec& spec);

// Recovers the (color, shape) pairs named by a rendered prompt, in order.
std::vector<std::pair<ColorKind, ShapeKind>> parse_prompt_pairs(
    const std::string& prompt);

SegSample generate_scene(std::uint64_t seed, std::size_t height,
                         std::size_t width, Scenario scenario);

// The closed word set of the prompt templates.
Vocabulary builtin_vocabulary();

// <dir>/manifest.json, <dir>/images/<id>.ppm, <dir>/masks/<id>.pgm.
void write_dataset(const std::vector<SegSample>& samples, const std::string& dir);
std::vector<SegSample> load_dataset(const std::string& dir);

}  // namespace langseg
