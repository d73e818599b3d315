#include "langseg/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "langseg/errors.hpp"
#include "langseg/ops.hpp"
#include "langseg/pnm.hpp"
#include "langseg/rng.hpp"

namespace langseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kShapeNames[3] = {"circle", "square", "triangle"};
const char* kColorNames[4] = {"red", "green", "blue", "yellow"};

// base RGB per color, chosen well apart under the jitter range
const double kColorRgb[4][3] = {
    {0.85, 0.10, 0.10},  // red
    {0.10, 0.80, 0.15},  // green
    {0.12, 0.20, 0.85},  // blue
    {0.90, 0.85, 0.10},  // yellow
};

constexpr double kOccluderGray = 0.5;

}  // namespace

std::size_t class_id(ShapeKind shape, ColorKind color) {
  return 1 + 4 * static_cast<std::size_t>(shape) + static_cast<std::size_t>(color);
}

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    v.push_back("background");
    for (int s = 0; s < 3; ++s) {
      for (int c = 0; c < 4; ++c) {
        v.push_back(std::string(kColorNames[c]) + " " + kShapeNames[s]);
      }
    }
    return v;
  }();
  return names;
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::clean: return "clean";
    case Scenario::occluded: return "occluded";
    case Scenario::cluttered: return "cluttered";
    case Scenario::lowres: return "lowres";
  }
  throw ContractError("unreachable scenario");
}

Scenario parse_scenario(const std::string& name) {
  for (Scenario s : {Scenario::clean, Scenario::occluded, Scenario::cluttered,
                     Scenario::lowres}) {
    if (name == scenario_name(s)) return s;
  }
  throw DataError("unknown scenario tag: " + name);
}

bool point_in_object(const SceneObject& obj, long x, long y) {
  const long dx = x - obj.cx, dy = y - obj.cy, s = obj.size;
  switch (obj.shape) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= s * s;
    case ShapeKind::square:
      return std::labs(dx) <= s && std::labs(dy) <= s;
    case ShapeKind::triangle: {
      // apex at (cx, cy-s), base at cy+s with half-width s
      const long t = y - (obj.cy - s);
      return t >= 0 && t <= 2 * s && 2 * std::labs(dx) <= t;
    }
  }
  throw ContractError("unreachable shape");
}

SceneSpec make_scene_spec(std::uint64_t seed, std::size_t height,
                          std::size_t width) {
  if (height < 32 || width < 32) {
    throw ConfigError("canvas must be at least 32x32");
  }
  SceneSpec spec{seed, height, width, {}};
  SplitMix64 rng(derive_seed(seed, 1));
  // 10/30/40/20 count mix over 1-4 objects; together with the size range
  // this keeps foreground around a third of the canvas, so no class's
  // gradient drowns in background pixels
  const std::size_t draw = rng.next_below(10);
  const std::size_t count = draw < 3 ? 2 : draw < 7 ? 3 : 4;
  // colors are dealt without replacement, so a prompt names each color at
  // most once and the color to class pairing it describes is unambiguous
  std::size_t palette[4] = {0, 1, 2, 3};
  for (std::size_t i = 3; i > 0; --i) {
    std::swap(palette[i], palette[rng.next_below(i + 1)]);
  }
  // one shape per scene: together with unique colors this keeps the prompt
  // unambiguous even as an unordered bag, since every named color wears the
  // same shape word
  const auto scene_shape = static_cast<ShapeKind>(rng.next_below(3));
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject obj{};
    obj.shape = scene_shape;
    obj.color = static_cast<ColorKind>(palette[i]);
    // keep trying for a center not crowding earlier objects; the last
    // attempt always sticks so generation cannot fail
    for (int attempt = 0; attempt < 20; ++attempt) {
      obj.size = 8 + static_cast<long>(rng.next_below(7));
      const long margin = obj.size + 1;
      obj.cx = margin + static_cast<long>(
                            rng.next_below(width - 2 * std::size_t(margin)));
      obj.cy = margin + static_cast<long>(
                            rng.next_below(height - 2 * std::size_t(margin)));
      bool ok = true;
      for (const SceneObject& prev : spec.objects) {
        const double ddx = double(obj.cx - prev.cx), ddy = double(obj.cy - prev.cy);
        if (std::sqrt(ddx * ddx + ddy * ddy) < 0.6 * double(obj.size + prev.size)) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    spec.objects.push_back(obj);
  }
  return spec;
}

std::string render_prompt(const SceneSpec& spec) {
  if (spec.objects.empty()) throw ContractError("render_prompt: no objects");
  auto describe = [](const SceneObject& o) {
    return std::string(kColorNames[static_cast<int>(o.color)]) + " " +
           kShapeNames[static_cast<int>(o.shape)];
  };
  std::string prompt = "a scene with " + describe(spec.objects[0]);
  if (spec.objects.size() >= 2) {
    const SceneObject &a = spec.objects[0], &b = spec.objects[1];
    const long dx = b.cx - a.cx, dy = b.cy - a.cy;
    const char* clause;
    if (std::labs(dx) >= std::labs(dy)) {
      clause = a.cx <= b.cx ? "left of" : "right of";
    } else {
      clause = a.cy <= b.cy ? "above" : "below";
    }
    prompt += std::string(" ") + clause + " " + describe(b);
    for (std::size_t i = 2; i < spec.objects.size(); ++i) {
      prompt += ", " + describe(spec.objects[i]);
    }
  }
  return prompt;
}

std::vector<std::pair<ColorKind, ShapeKind>> parse_prompt_pairs(
    const std::string& prompt) {
  std::vector<std::string> words;
  std::string word;
  for (char ch : prompt) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      word.push_back(ch);
    } else if (!word.empty()) {
      words.push_back(word);
      word.clear();
    }
  }
  if (!word.empty()) words.push_back(word);

  auto color_of = [](const std::string& w) -> int {
    for (int c = 0; c < 4; ++c) {
      if (w == kColorNames[c]) return c;
    }
    return -1;
  };
  auto shape_of = [](const std::string& w) -> int {
    for (int s = 0; s < 3; ++s) {
      if (w == kShapeNames[s]) return s;
    }
    return -1;
  };
  std::vector<std::pair<ColorKind, ShapeKind>> pairs;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    int c = color_of(words[i]), s = shape_of(words[i + 1]);
    if (c >= 0 && s >= 0) {
      pairs.emplace_back(static_cast<ColorKind>(c), static_cast<ShapeKind>(s));
      ++i;
    }
  }
  return pairs;
}

namespace {

// index of the topmost object covering (x, y), or -1
int owner_at(const SceneSpec& spec, long x, long y) {
  for (int i = static_cast<int>(spec.objects.size()) - 1; i >= 0; --i) {
    if (point_in_object(spec.objects[std::size_t(i)], x, y)) return i;
  }
  return -1;
}

void apply_occlusion(Tensor& image, const SceneSpec& spec, SplitMix64& rng) {
  const std::size_t h = spec.height, w = spec.width, hw = h * w;
  const SceneObject& target = spec.objects.back();  // topmost, never hidden

  std::vector<std::size_t> per_line;  // target pixels per column or row
  const bool vertical = rng.next_below(2) == 0;
  per_line.assign(vertical ? w : h, 0);
  std::size_t total = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (point_in_object(target, long(x), long(y))) {
        ++per_line[vertical ? x : y];
        ++total;
      }
    }
  }

  // every (width, offset) whose covered fraction lands in [0.20, 0.40]
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  const std::size_t lines = per_line.size();
  std::vector<std::size_t> prefix(lines + 1, 0);
  for (std::size_t i = 0; i < lines; ++i) prefix[i + 1] = prefix[i] + per_line[i];
  for (std::size_t bw = 1; bw <= std::min<std::size_t>(32, lines); ++bw) {
    for (std::size_t at = 0; at + bw <= lines; ++at) {
      const double frac =
          double(prefix[at + bw] - prefix[at]) / double(total);
      if (frac >= 0.20 && frac <= 0.40) candidates.emplace_back(bw, at);
    }
  }
  if (candidates.empty()) {
    throw ContractError("no occluder bar hits the 20-40% window");
  }
  auto [bw, at] = candidates[rng.next_below(candidates.size())];
  for (std::size_t line = at; line < at + bw; ++line) {
    for (std::size_t other = 0; other < (vertical ? h : w); ++other) {
      const std::size_t x = vertical ? line : other;
      const std::size_t y = vertical ? other : line;
      for (std::size_t c = 0; c < 3; ++c) {
        image[c * hw + y * w + x] = kOccluderGray;
      }
    }
  }
}

void apply_clutter(Tensor& image, const Tensor& mask, const SceneSpec& spec,
                   SplitMix64& rng) {
  const std::size_t h = spec.height, w = spec.width, hw = h * w;
  const long steps_x[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  const long steps_y[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  for (int stroke = 0; stroke < 30; ++stroke) {
    long x = long(rng.next_below(w)), y = long(rng.next_below(h));
    const std::size_t dir = rng.next_below(8);
    const std::size_t len = 5 + rng.next_below(6);
    const long thick = 1 + long(rng.next_below(2));
    // strokes borrow the object palette and some width; thin gray scribbles
    // are too easy to ignore for a model keyed on saturated colors
    const double* shade = kColorRgb[rng.next_below(4)];
    for (std::size_t i = 0; i < len; ++i) {
      if (x < 0 || y < 0 || x >= long(w) || y >= long(h)) break;
      for (long oy = -thick + 1; oy < thick; ++oy) {
        for (long ox = -thick + 1; ox < thick; ++ox) {
          const long qx = x + ox, qy = y + oy;
          if (qx < 0 || qy < 0 || qx >= long(w) || qy >= long(h)) continue;
          const std::size_t px = std::size_t(qy) * w + std::size_t(qx);
          if (mask[px] == 0.0) {  // background only; objects stay intact
            for (std::size_t c = 0; c < 3; ++c) image[c * hw + px] = shade[c];
          }
        }
      }
      x += steps_x[dir];
      y += steps_y[dir];
    }
  }
}

}  // namespace

SegSample generate_scene(std::uint64_t seed, std::size_t height,
                         std::size_t width, Scenario scenario) {
  const SceneSpec spec = make_scene_spec(seed, height, width);
  const std::size_t hw = height * width;

  Tensor image({3, height, width});
  Tensor mask({height, width});
  SplitMix64 bg_rng(derive_seed(seed, 2));
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t px = y * width + x;
      const int owner = owner_at(spec, long(x), long(y));
      if (owner < 0) {
        // plain gray with a whisper of speckle; edges should belong to
        // objects, not to the backdrop
        const double gray = 0.48 + 0.04 * bg_rng.next_double();
        for (std::size_t c = 0; c < 3; ++c) image[c * hw + px] = gray;
      } else {
        const SceneObject& obj = spec.objects[std::size_t(owner)];
        for (std::size_t c = 0; c < 3; ++c) {
          image[c * hw + px] = kColorRgb[static_cast<int>(obj.color)][c];
        }
        mask[px] = double(class_id(obj.shape, obj.color));
      }
    }
  }

  switch (scenario) {
    case Scenario::clean:
      break;
    case Scenario::occluded: {
      SplitMix64 rng(derive_seed(seed, 3));
      apply_occlusion(image, spec, rng);
      break;
    }
    case Scenario::cluttered: {
      SplitMix64 rng(derive_seed(seed, 4));
      apply_clutter(image, mask, spec, rng);
      break;
    }
    case Scenario::lowres: {
      Tensor down = kern::nearest_resize(image, height / 4, width / 4);
      image = kern::nearest_resize(down, height, width);
      break;
    }
  }

  SegSample sample;
  sample.image = std::move(image);
  sample.mask = std::move(mask);
  sample.prompt = render_prompt(spec);
  sample.scenario = scenario;
  sample.seed = seed;
  return sample;
}

Vocabulary builtin_vocabulary() {
  std::vector<std::string> words = {"a",    "scene", "with", "left",
                                    "right", "of",    "above", "below"};
  for (const char* c : kColorNames) words.push_back(c);
  for (const char* s : kShapeNames) words.push_back(s);
  return Vocabulary(words);
}

void write_dataset(const std::vector<SegSample>& samples, const std::string& dir) {
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (ec) throw IoError("cannot create dataset directories under " + dir);

  json manifest;
  manifest["version"] = 1;
  manifest["classes"] = class_names();
  json sample_list = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%06zu", i);
    const std::string image_rel = std::string("images/") + id + ".ppm";
    const std::string mask_rel = std::string("masks/") + id + ".pgm";
    save_ppm((root / image_rel).string(), samples[i].image);
    save_pgm((root / mask_rel).string(), samples[i].mask);
    json entry;
    entry["image"] = image_rel;
    entry["mask"] = mask_rel;
    entry["prompt"] = samples[i].prompt;
    entry["scenario"] = scenario_name(samples[i].scenario);
    entry["seed"] = samples[i].seed;
    sample_list.push_back(entry);
  }
  manifest["samples"] = sample_list;

  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest under " + dir);
  out << manifest.dump(2) << "\n";
}

std::vector<SegSample> load_dataset(const std::string& dir) {
  fs::path root(dir);
  const std::string manifest_path = (root / "manifest.json").string();
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path + ": " + e.what());
  }
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw DataError("unsupported manifest version in " + manifest_path);
    }
    if (manifest.at("classes").get<std::vector<std::string>>() != class_names()) {
      throw DataError("manifest class table mismatch in " + manifest_path);
    }
    std::vector<SegSample> samples;
    for (const json& entry : manifest.at("samples")) {
      SegSample s;
      s.image = load_ppm((root / entry.at("image").get<std::string>()).string());
      s.mask = load_pgm((root / entry.at("mask").get<std::string>()).string());
      s.prompt = entry.at("prompt").get<std::string>();
      s.scenario = parse_scenario(entry.at("scenario").get<std::string>());
      s.seed = entry.at("seed").get<std::uint64_t>();
      for (std::size_t i = 0; i < s.mask.size(); ++i) {
        if (s.mask[i] >= double(kNumClasses)) {
          throw DataError("mask class id out of range in " +
                          entry.at("mask").get<std::string>());
        }
      }
      samples.push_back(std::move(s));
    }
    return samples;
  } catch (const json::exception& e) {
    throw DataError("manifest field error in " + manifest_path + ": " + e.what());
  }
}

}  // namespace langseg
