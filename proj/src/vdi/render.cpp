#include <cmath>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "vrx/vdi/vdi.hpp"

namespace vrx::vdi {

namespace {

// Minimal RGB8 PNG encoder (zlib deflate). Used only to embed the image in
// SVG overlays.
std::string png_encode_rgb8(const std::vector<std::uint8_t>& rgb, std::size_t w, std::size_t h) {
  std::vector<std::uint8_t> raw;
  raw.reserve((w * 3 + 1) * h);
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + static_cast<long>(y * w * 3),
               rgb.begin() + static_cast<long>((y + 1) * w * 3));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(bound);
  if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("png encode: deflate failed");
  z.resize(bound);

  std::string out;
  auto be32 = [](std::uint32_t v) {
    std::string s(4, '\0');
    s[0] = static_cast<char>((v >> 24) & 0xff);
    s[1] = static_cast<char>((v >> 16) & 0xff);
    s[2] = static_cast<char>((v >> 8) & 0xff);
    s[3] = static_cast<char>(v & 0xff);
    return s;
  };
  auto chunk = [&](const char* type, const std::string& payload) {
    out += be32(static_cast<std::uint32_t>(payload.size()));
    std::string body = std::string(type) + payload;
    out += body;
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                           static_cast<uInt>(body.size()));
    out += be32(static_cast<std::uint32_t>(crc));
  };
  out += "\x89PNG\r\n\x1a\n";
  std::string ihdr = be32(static_cast<std::uint32_t>(w)) + be32(static_cast<std::uint32_t>(h));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
  chunk("IHDR", ihdr);
  chunk("IDAT", std::string(reinterpret_cast<const char*>(z.data()), z.size()));
  chunk("IEND", "");
  return out;
}

std::vector<std::uint8_t> chw_to_rgb8(const ad::Tensor& image) {
  const Shape& s = image.shape();
  const std::size_t hw = s[1] * s[2];
  std::vector<std::uint8_t> rgb(hw * 3);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(image.data()[c * hw + p], 0.0, 1.0);
      rgb[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return rgb;
}

std::string render_dot(const Explanation& e, const ContributionScale& scale) {
  std::ostringstream os;
  os << "digraph explanation {\n";
  os << "  rankdir=LR;\n  node [shape=circle, style=filled, fontsize=10];\n";
  for (const ClassSection& sec : e.sections) {
    // The "why target-class" view: the target class's own hypothesis.
    const HypothesisScores& h = sec.hypotheses.at(sec.target_class);
    const auto& metas = e.detections.at(sec.target_class);
    const std::size_t N = h.node_scores.size();
    os << "  subgraph cluster_class" << sec.target_class << " {\n";
    os << "    label=\"" << (sec.target_class == e.student_top1 ? "why class " : "why not class ")
       << sec.target_class << " (s=" << h.score << ")\";\n";
    for (std::size_t s = 0; s < N; ++s) {
      const double norm = h.node_scores[s] / e.normalization;
      const auto b = scale.bucket(norm);
      os << "    c" << sec.target_class << "_n" << s << " [label=\"" << s
         << (metas[s].detected ? "" : "*") << "\", fillcolor=\""
         << ContributionScale::bucket_color(b) << "\", tooltip=\"score=" << h.node_scores[s]
         << " (" << ContributionScale::bucket_name(b) << ")\"];\n";
    }
    std::size_t p = 0;
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t i = 0; i < N; ++i) {
        if (i == j) continue;
        const double norm = h.edge_scores[p] / e.normalization;
        const auto b = scale.bucket(norm);
        os << "    c" << sec.target_class << "_n" << j << " -> c" << sec.target_class << "_n"
           << i << " [color=\"" << ContributionScale::bucket_color(b)
           << "\", tooltip=\"score=" << h.edge_scores[p] << "\"];\n";
        ++p;
      }
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

std::string render_svg(const Explanation& e, const ContributionScale& scale) {
  if (!e.image.defined())
    throw Error("render_explanation: svg overlay needs the in-memory image (run explain first)");
  const Shape& s = e.image.shape();
  const std::size_t H = s[1], W = s[2];
  const int zoom = 4;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W * zoom << "\" height=\""
     << H * zoom << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  const std::string png = png_encode_rgb8(chw_to_rgb8(e.image), W, H);
  os << "  <image width=\"" << W << "\" height=\"" << H
     << "\" image-rendering=\"pixelated\" href=\"data:image/png;base64,"
     << base64_encode(png.data(), png.size()) << "\"/>\n";
  // Boxes for the predicted class's hypothesis, colored by node score.
  const ClassSection& sec = e.sections.at(e.student_top1);
  const HypothesisScores& h = sec.hypotheses.at(e.student_top1);
  const auto& metas = e.detections.at(e.student_top1);
  for (std::size_t i = 0; i < metas.size(); ++i) {
    if (!metas[i].detected) continue;
    const auto b = scale.bucket(h.node_scores[i] / e.normalization);
    const world::Box& box = metas[i].box;
    os << "  <rect x=\"" << box.x0 << "\" y=\"" << box.y0 << "\" width=\"" << box.width()
       << "\" height=\"" << box.height() << "\" fill=\"none\" stroke=\""
       << ContributionScale::bucket_color(b) << "\" stroke-width=\"0.8\"/>\n";
    os << "  <text x=\"" << box.x0 + 1 << "\" y=\"" << box.y0 + 4 << "\" font-size=\"4\" fill=\""
       << ContributionScale::bucket_color(b) << "\">" << i << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

std::string render_explanation(const Explanation& e, const std::string& format,
                               const ContributionScale& scale) {
  if (format == "json") return explanation_to_json(e).dump(2);
  if (format == "dot") return render_dot(e, scale);
  if (format == "svg") return render_svg(e, scale);
  throw Error("render_explanation: unknown format '" + format + "' (expected json|dot|svg)");
}

}  // namespace vrx::vdi
