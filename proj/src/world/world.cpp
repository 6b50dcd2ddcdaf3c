#include "vrx/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vrx/tensor/io.hpp"

namespace vrx::world {

using nlohmann::json;
namespace fs = std::filesystem;

Box Box::clipped(int w, int h) const {
  Box b = *this;
  b.x0 = std::clamp(b.x0, 0, w);
  b.x1 = std::clamp(b.x1, 0, w);
  b.y0 = std::clamp(b.y0, 0, h);
  b.y1 = std::clamp(b.y1, 0, h);
  return b;
}

double box_iou(const Box& a, const Box& b) {
  const int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const long inter = std::max(0, ix1 - ix0) * static_cast<long>(std::max(0, iy1 - iy0));
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

const char* glyph_name(Glyph g) {
  switch (g) {
    case Glyph::Disc: return "disc";
    case Glyph::Bar: return "bar";
    case Glyph::Cross: return "cross";
    case Glyph::Ring: return "ring";
    case Glyph::Wedge: return "wedge";
  }
  return "disc";
}

Glyph glyph_from_name(const std::string& name) {
  for (Glyph g : {Glyph::Disc, Glyph::Bar, Glyph::Cross, Glyph::Ring, Glyph::Wedge})
    if (name == glyph_name(g)) return g;
  throw ConfigError("unknown glyph name: " + name);
}

namespace {

// Membership test in glyph-local coordinates, unit scale.
bool glyph_inside(Glyph g, double u, double v) {
  switch (g) {
    case Glyph::Disc:
      return u * u + v * v <= 1.0;
    case Glyph::Ring: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.30;
    }
    case Glyph::Bar:
      return std::abs(u) <= 1.0 && std::abs(v) <= 0.32;
    case Glyph::Cross:
      return (std::abs(u) <= 1.0 && std::abs(v) <= 0.30) ||
             (std::abs(v) <= 1.0 && std::abs(u) <= 0.30);
    case Glyph::Wedge:
      // Triangle pointing toward -v.
      return v >= -1.0 && v <= 0.8 && std::abs(u) <= 0.85 * (v + 1.0) / 1.8;
  }
  return false;
}

struct PlacedPart {
  const PartSpec* part;
  double cx, cy;     // pixel center
  double angle_rad;  // glyph orientation
};

}  // namespace

void WorldSpec::validate() const {
  if (image_size < 16) throw ConfigError("world: image_size must be at least 16");
  if (channels != 3) throw ConfigError("world: only 3-channel images are supported");
  if (noise_level < 0.0) throw ConfigError("world: noise_level must be non-negative");
  if (poses.empty()) throw ConfigError("world: pose catalog is empty");
  if (classes.empty()) throw ConfigError("world: no classes defined");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const ClassSpec& cs = classes[c];
    if (cs.parts.size() < 2)
      throw ConfigError("world: class '" + cs.name + "' has fewer than 2 parts");
    if (cs.layout.size() != cs.parts.size())
      throw ConfigError("world: class '" + cs.name + "' layout/part count mismatch");
    for (const auto& p : cs.layout)
      if (p[0] < 0.0 || p[0] > 1.0 || p[1] < 0.0 || p[1] > 1.0)
        throw ConfigError("world: class '" + cs.name + "' has a canonical position outside [0,1]^2");
    if (cs.pose_ids.empty())
      throw ConfigError("world: class '" + cs.name + "' allows no poses");
    for (std::size_t pid : cs.pose_ids)
      if (pid >= poses.size())
        throw ConfigError("world: class '" + cs.name + "' references unknown pose id " +
                          std::to_string(pid));
  }
  // Class separability: no two classes may share both the part multiset and
  // the layout.
  auto part_key = [](const PartSpec& p) {
    std::ostringstream os;
    os << glyph_name(p.glyph) << ":" << p.color[0] << "," << p.color[1] << "," << p.color[2]
       << ":" << p.size;
    return os.str();
  };
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      std::vector<std::string> ka, kb;
      for (const auto& p : classes[a].parts) ka.push_back(part_key(p));
      for (const auto& p : classes[b].parts) kb.push_back(part_key(p));
      std::sort(ka.begin(), ka.end());
      std::sort(kb.begin(), kb.end());
      if (ka != kb) continue;
      bool same_layout = classes[a].layout.size() == classes[b].layout.size();
      for (std::size_t i = 0; same_layout && i < classes[a].layout.size(); ++i)
        same_layout = std::abs(classes[a].layout[i][0] - classes[b].layout[i][0]) < 1e-9 &&
                      std::abs(classes[a].layout[i][1] - classes[b].layout[i][1]) < 1e-9;
      if (same_layout)
        throw ConfigError("world: classes '" + classes[a].name + "' and '" + classes[b].name +
                          "' share both part multiset and layout");
    }
  }
}

json WorldSpec::to_json() const {
  json j;
  j["image_size"] = image_size;
  j["channels"] = channels;
  j["noise_level"] = noise_level;
  j["jitter"] = jitter;
  j["poses"] = json::array();
  for (const Pose& p : poses)
    j["poses"].push_back({{"rotation_deg", p.rotation_deg}, {"dx", p.dx}, {"dy", p.dy}});
  j["classes"] = json::array();
  for (const ClassSpec& c : classes) {
    json jc;
    jc["name"] = c.name;
    jc["parts"] = json::array();
    for (const PartSpec& p : c.parts)
      jc["parts"].push_back(
          {{"glyph", glyph_name(p.glyph)}, {"color", p.color}, {"size", p.size}});
    jc["layout"] = c.layout;
    jc["pose_ids"] = c.pose_ids;
    j["classes"].push_back(jc);
  }
  return j;
}

WorldSpec WorldSpec::from_json(const json& j) {
  WorldSpec s;
  try {
    s.image_size = j.at("image_size").get<std::size_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.noise_level = j.at("noise_level").get<double>();
    s.jitter = j.at("jitter").get<double>();
    for (const auto& jp : j.at("poses"))
      s.poses.push_back({jp.at("rotation_deg").get<double>(), jp.at("dx").get<double>(),
                         jp.at("dy").get<double>()});
    for (const auto& jc : j.at("classes")) {
      ClassSpec c;
      c.name = jc.at("name").get<std::string>();
      for (const auto& jp : jc.at("parts")) {
        PartSpec p;
        p.glyph = glyph_from_name(jp.at("glyph").get<std::string>());
        p.color = jp.at("color").get<std::array<double, 3>>();
        p.size = jp.at("size").get<double>();
        c.parts.push_back(p);
      }
      c.layout = jc.at("layout").get<std::vector<std::array<double, 2>>>();
      c.pose_ids = jc.at("pose_ids").get<std::vector<std::size_t>>();
      s.classes.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("world spec: ") + e.what());
  }
  s.validate();
  return s;
}

ad::Tensor render_image(const WorldSpec& spec, std::size_t class_id, std::size_t pose_id,
                        Rng& rng, std::vector<PartPlacement>& provenance) {
  if (class_id >= spec.classes.size()) throw ConfigError("render_image: unknown class id");
  if (pose_id >= spec.poses.size()) throw ConfigError("render_image: unknown pose id");
  const ClassSpec& cls = spec.classes[class_id];
  const Pose& pose = spec.poses[pose_id];
  const int n = static_cast<int>(spec.image_size);
  const double size_px = static_cast<double>(n);

  ad::Tensor img(Shape{spec.channels, spec.image_size, spec.image_size}, 0.0);

  const double theta = pose.rotation_deg * M_PI / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<PlacedPart> placed;
  placed.reserve(cls.parts.size());
  for (std::size_t k = 0; k < cls.parts.size(); ++k) {
    // Rotate the canonical position about the center, translate, jitter.
    const double px = cls.layout[k][0] - 0.5, py = cls.layout[k][1] - 0.5;
    double x = 0.5 + ct * px - st * py + pose.dx;
    double y = 0.5 + st * px + ct * py + pose.dy;
    x += rng.uniform(-spec.jitter, spec.jitter);
    y += rng.uniform(-spec.jitter, spec.jitter);
    placed.push_back({&cls.parts[k], x * size_px, y * size_px, theta});
  }

  double* r = img.ptr();
  double* g = r + spec.image_size * spec.image_size;
  double* b = g + spec.image_size * spec.image_size;

  for (std::size_t k = 0; k < placed.size(); ++k) {
    const PlacedPart& pp = placed[k];
    const double half = pp.part->size * size_px;
    const double margin = half * 1.5;  // rotation-safe bound
    Box bbox{static_cast<int>(std::floor(pp.cx - margin)),
             static_cast<int>(std::floor(pp.cy - margin)),
             static_cast<int>(std::ceil(pp.cx + margin)) + 1,
             static_cast<int>(std::ceil(pp.cy + margin)) + 1};
    bbox = bbox.clipped(n, n);
    const double ca = std::cos(-pp.angle_rad), sa = std::sin(-pp.angle_rad);
    int minx = n, miny = n, maxx = -1, maxy = -1;
    for (int y = bbox.y0; y < bbox.y1; ++y) {
      for (int x = bbox.x0; x < bbox.x1; ++x) {
        // 2x2 supersampled coverage.
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            const double fx = x + 0.25 + 0.5 * sx - pp.cx;
            const double fy = y + 0.25 + 0.5 * sy - pp.cy;
            const double u = (ca * fx - sa * fy) / half;
            const double v = (sa * fx + ca * fy) / half;
            if (glyph_inside(pp.part->glyph, u, v)) ++hits;
          }
        if (hits == 0) continue;
        const double cov = hits / 4.0;
        const std::size_t idx = static_cast<std::size_t>(y) * spec.image_size +
                                static_cast<std::size_t>(x);
        r[idx] = r[idx] * (1.0 - cov) + pp.part->color[0] * cov;
        g[idx] = g[idx] * (1.0 - cov) + pp.part->color[1] * cov;
        b[idx] = b[idx] * (1.0 - cov) + pp.part->color[2] * cov;
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
    }
    Box rendered = (maxx >= minx) ? Box{minx, miny, maxx + 1, maxy + 1} : Box{};
    provenance.push_back({k, rendered, pose_id});
  }

  if (spec.noise_level > 0.0) {
    const std::size_t total = spec.channels * spec.image_size * spec.image_size;
    double* px = img.ptr();
    for (std::size_t i = 0; i < total; ++i)
      px[i] = std::clamp(px[i] + rng.normal(0.0, spec.noise_level), 0.0, 1.0);
  }
  return img;
}

Dataset generate_dataset(const WorldSpec& spec, std::size_t n_per_class, std::uint64_t seed) {
  spec.validate();
  if (n_per_class < 1) throw ConfigError("generate_dataset: n_per_class must be >= 1");
  Dataset ds;
  ds.spec = spec;
  const std::size_t total = spec.n_classes() * n_per_class;
  ds.images.resize(total);
  parallel_for(total, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t cls = i / n_per_class;
      Rng rng(derive_seed(seed, i));
      const auto& allowed = spec.classes[cls].pose_ids;
      const std::size_t pose_id = allowed[rng.uniform_index(allowed.size())];
      LabeledImage& im = ds.images[i];
      im.label = cls;
      im.id = i;
      im.pixels = render_image(spec, cls, pose_id, rng, im.provenance);
    }
  });
  return ds;
}

std::array<double, 3> Dataset::mean_pixel() const {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  if (images.empty()) return m;
  const std::size_t hw = spec.image_size * spec.image_size;
  for (const LabeledImage& im : images) {
    const double* p = im.pixels.ptr();
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += p[c * hw + i];
      m[c] += s / static_cast<double>(hw);
    }
  }
  for (double& v : m) v /= static_cast<double>(images.size());
  return m;
}

ad::Tensor mask_image(const ad::Tensor& image, const ad::Tensor& attention, double tau) {
  if (tau <= 0.0 || tau >= 1.0) throw ConfigError("mask_image: tau must lie in (0,1)");
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("mask_image: image must be [C,H,W], got " + shape_str(s));
  const std::size_t hw = s[1] * s[2];
  if (attention.numel() != hw)
    throw ShapeError("mask_image: attention map " + shape_str(attention.shape()) +
                     " does not match image spatial dims " + shape_str(s));
  ad::Tensor out = image.clone();
  for (std::size_t c = 0; c < s[0]; ++c) {
    double* dst = out.ptr() + c * hw;
    for (std::size_t i = 0; i < hw; ++i)
      if (attention.data()[i] < tau) dst[i] = 0.0;
  }
  return out;
}

ad::Tensor occlude_region(const ad::Tensor& image, const Box& box,
                          const std::array<double, 3>& fill) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("occlude_region: image must be [C,H,W]");
  const int h = static_cast<int>(s[1]), w = static_cast<int>(s[2]);
  Box b = box.clipped(w, h);
  if (b.area() <= 0) throw Error("occlude_region: degenerate zero-area box");
  ad::Tensor out = image.clone();
  const std::size_t hw = s[1] * s[2];
  for (std::size_t c = 0; c < s[0]; ++c) {
    double* dst = out.ptr() + c * hw;
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) dst[static_cast<std::size_t>(y) * s[2] + static_cast<std::size_t>(x)] = fill[c];
  }
  return out;
}

ad::Tensor crop(const ad::Tensor& image, const Box& box) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("crop: image must be [C,H,W]");
  const int h = static_cast<int>(s[1]), w = static_cast<int>(s[2]);
  Box b = box.clipped(w, h);
  if (b.area() <= 0) throw Error("crop: degenerate zero-area box");
  ad::Tensor out(Shape{s[0], static_cast<std::size_t>(b.height()), static_cast<std::size_t>(b.width())});
  const std::size_t hw = s[1] * s[2];
  for (std::size_t c = 0; c < s[0]; ++c)
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x)
        out.ptr()[(c * static_cast<std::size_t>(b.height()) + static_cast<std::size_t>(y - b.y0)) * static_cast<std::size_t>(b.width()) +
                  static_cast<std::size_t>(x - b.x0)] = image.data()[c * hw + static_cast<std::size_t>(y) * s[2] + static_cast<std::size_t>(x)];
  return out;
}

ad::Tensor resize_bilinear(const ad::Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("resize_bilinear: image must be [C,H,W]");
  const std::size_t C = s[0], H = s[1], W = s[2];
  ad::Tensor out(Shape{C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = image.ptr() + c * H * W;
    double* dst = out.ptr() + c * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double fy0 = std::floor(fy);
      const std::size_t y0 = static_cast<std::size_t>(std::clamp(fy0, 0.0, static_cast<double>(H - 1)));
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      const double wy = std::clamp(fy - fy0, 0.0, 1.0);
      for (std::size_t x = 0; x < out_w; ++x) {
        const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
        const double fx0 = std::floor(fx);
        const std::size_t x0 = static_cast<std::size_t>(std::clamp(fx0, 0.0, static_cast<double>(W - 1)));
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double wx = std::clamp(fx - fx0, 0.0, 1.0);
        const double top = src[y0 * W + x0] * (1.0 - wx) + src[y0 * W + x1] * wx;
        const double bot = src[y1 * W + x0] * (1.0 - wx) + src[y1 * W + x1] * wx;
        dst[y * out_w + x] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

ad::Tensor paste_patch(const ad::Tensor& image, const Box& box, const ad::Tensor& patch_pixels,
                       int feather) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("paste_patch: image must be [C,H,W]");
  const int h = static_cast<int>(s[1]), w = static_cast<int>(s[2]);
  Box b = box.clipped(w, h);
  if (b.area() <= 0) throw Error("paste_patch: degenerate zero-area box");
  ad::Tensor patch = resize_bilinear(patch_pixels, static_cast<std::size_t>(b.height()),
                                     static_cast<std::size_t>(b.width()));
  ad::Tensor out = image.clone();
  const std::size_t hw = s[1] * s[2];
  for (std::size_t c = 0; c < s[0]; ++c) {
    double* dst = out.ptr() + c * hw;
    const double* src = patch.ptr() + c * static_cast<std::size_t>(b.height()) * static_cast<std::size_t>(b.width());
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) {
        const int dedge = std::min(std::min(x - b.x0, b.x1 - 1 - x), std::min(y - b.y0, b.y1 - 1 - y));
        // Feathered border: blend toward the original near the seam.
        const double alpha = feather > 0 ? std::min(1.0, (dedge + 1.0) / (feather + 1.0)) : 1.0;
        const std::size_t di = static_cast<std::size_t>(y) * s[2] + static_cast<std::size_t>(x);
        const std::size_t si = static_cast<std::size_t>(y - b.y0) * static_cast<std::size_t>(b.width()) +
                               static_cast<std::size_t>(x - b.x0);
        dst[di] = dst[di] * (1.0 - alpha) + src[si] * alpha;
      }
  }
  return out;
}

void export_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw Error("export_dataset: cannot open manifest in " + dir);
  std::ofstream spec_out(fs::path(dir) / "world.json");
  spec_out << ds.spec.to_json().dump(2);
  for (const LabeledImage& im : ds.images) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06zu.tensor", im.id);
    ad::save_tensor(im.pixels, (fs::path(dir) / name).string());
    json rec;
    rec["file"] = name;
    rec["id"] = im.id;
    rec["label"] = im.label;
    rec["provenance"] = json::array();
    for (const PartPlacement& p : im.provenance)
      rec["provenance"].push_back({{"part_id", p.part_id},
                                   {"box", {p.box.x0, p.box.y0, p.box.x1, p.box.y1}},
                                   {"pose_id", p.pose_id}});
    manifest << rec.dump() << "\n";
  }
}

Dataset import_dataset(const std::string& dir) {
  Dataset ds;
  {
    std::ifstream spec_in(fs::path(dir) / "world.json");
    if (!spec_in) throw Error("import_dataset: missing world.json in " + dir);
    json j;
    spec_in >> j;
    ds.spec = WorldSpec::from_json(j);
  }
  std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw Error("import_dataset: missing manifest.jsonl in " + dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw SchemaError("import_dataset: bad manifest line: " + line);
    LabeledImage im;
    im.id = rec.at("id").get<std::size_t>();
    im.label = rec.at("label").get<std::size_t>();
    im.pixels = ad::load_tensor((fs::path(dir) / rec.at("file").get<std::string>()).string());
    for (const auto& jp : rec.at("provenance")) {
      PartPlacement p;
      p.part_id = jp.at("part_id").get<std::size_t>();
      auto b = jp.at("box").get<std::array<int, 4>>();
      p.box = Box{b[0], b[1], b[2], b[3]};
      p.pose_id = jp.at("pose_id").get<std::size_t>();
      im.provenance.push_back(p);
    }
    ds.images.push_back(std::move(im));
  }
  return ds;
}

WorldSpec default_world() {
  WorldSpec s;
  s.image_size = 64;
  s.noise_level = 0.02;
  s.jitter = 0.012;
  s.poses = {{-15.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {15.0, 0.0, 0.0}};

  const PartSpec disc{Glyph::Disc, {0.95, 0.20, 0.15}, 0.085};
  const PartSpec ring{Glyph::Ring, {0.95, 0.85, 0.15}, 0.095};
  const PartSpec bar{Glyph::Bar, {0.15, 0.85, 0.90}, 0.105};
  const PartSpec cross{Glyph::Cross, {0.90, 0.25, 0.90}, 0.100};

  // Two classes with the same part multiset, separated only by layout.
  ClassSpec boxer;
  boxer.name = "boxer";
  boxer.parts = {disc, ring, bar, cross};
  boxer.layout = {{0.32, 0.32}, {0.68, 0.32}, {0.32, 0.68}, {0.68, 0.68}};
  boxer.pose_ids = {0, 1, 2};

  ClassSpec liner;
  liner.name = "liner";
  liner.parts = {disc, ring, bar, cross};
  liner.layout = {{0.23, 0.23}, {0.41, 0.41}, {0.59, 0.59}, {0.77, 0.77}};
  liner.pose_ids = {0, 1, 2};

  ClassSpec forker;
  forker.name = "forker";
  forker.parts = {PartSpec{Glyph::Wedge, {0.25, 0.90, 0.30}, 0.105},
                  PartSpec{Glyph::Wedge, {0.30, 0.40, 0.95}, 0.105},
                  PartSpec{Glyph::Disc, {0.95, 0.60, 0.20}, 0.085},
                  PartSpec{Glyph::Bar, {0.90, 0.90, 0.90}, 0.105}};
  forker.layout = {{0.32, 0.30}, {0.68, 0.30}, {0.50, 0.55}, {0.50, 0.78}};
  forker.pose_ids = {0, 1, 2};

  s.classes = {boxer, liner, forker};
  s.validate();
  return s;
}

WorldSpec pose_bias_world(bool biased) {
  WorldSpec s;
  s.image_size = 64;
  s.noise_level = 0.02;
  s.jitter = 0.012;
  s.poses = {{0.0, 0.0, 0.0}, {120.0, 0.0, 0.0}, {240.0, 0.0, 0.0}};

  // All classes share the identical part multiset (rotation-invariant glyphs),
  // so only the spatial arrangement separates them. A teacher trained on one
  // pose per class has no appearance shortcut and inherits the pose bias,
  // while concept detection keeps working at every pose.
  const std::vector<PartSpec> parts = {PartSpec{Glyph::Disc, {0.95, 0.20, 0.15}, 0.085},
                                       PartSpec{Glyph::Ring, {0.95, 0.85, 0.15}, 0.095},
                                       PartSpec{Glyph::Disc, {0.20, 0.90, 0.90}, 0.085},
                                       PartSpec{Glyph::Ring, {0.90, 0.25, 0.90}, 0.095}};

  ClassSpec hauler;  // tight diagonal line
  hauler.name = "hauler";
  hauler.parts = parts;
  hauler.layout = {{0.26, 0.26}, {0.42, 0.42}, {0.58, 0.58}, {0.74, 0.74}};

  ClassSpec scout;  // L shape
  scout.name = "scout";
  scout.parts = parts;
  scout.layout = {{0.32, 0.28}, {0.32, 0.52}, {0.32, 0.76}, {0.64, 0.76}};

  ClassSpec rover;  // T shape
  rover.name = "rover";
  rover.parts = parts;
  rover.layout = {{0.28, 0.32}, {0.52, 0.32}, {0.76, 0.32}, {0.52, 0.64}};

  s.classes = {hauler, scout, rover};
  for (std::size_t c = 0; c < s.classes.size(); ++c)
    s.classes[c].pose_ids = biased ? std::vector<std::size_t>{c} : std::vector<std::size_t>{0, 1, 2};
  s.validate();
  return s;
}

}  // namespace vrx::world
