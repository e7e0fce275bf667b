#include "miladv/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "miladv/errors.hpp"

namespace miladv {

using detail::read_le;
using detail::write_le;

void save_model(const AttentionMILModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot write");
  out.write("MILM", 4);
  write_le<std::uint32_t>(out, kModelVersion);
  write_le<std::uint32_t>(out, model.gated() ? 1 : 0);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hyper.hidden));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hyper.attention));
  Parameters::zip(
      [&](const auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) write_le<double>(out, t.data()[i]);
      },
      model.params);
  if (!out) throw Error(path.string() + ": write failed");
}

AttentionMILModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string name = path.string();
  if (!in) throw FormatError(name + ": cannot open");
  detail::expect_magic(in, "MILM", name);
  const auto version = read_le<std::uint32_t>(in, name);
  if (version != kModelVersion)
    throw FormatError(name + " @ offset 4: unsupported version " + std::to_string(version));
  const auto variant = read_le<std::uint32_t>(in, name);
  if (variant > 1) throw FormatError(name + " @ offset 8: bad variant " + std::to_string(variant));

  AttentionMILModel m;
  m.dim = read_le<std::uint32_t>(in, name);
  m.hyper.hidden = read_le<std::uint32_t>(in, name);
  m.hyper.attention = read_le<std::uint32_t>(in, name);
  m.hyper.variant = variant == 1 ? AttentionVariant::gated : AttentionVariant::plain;
  if (m.dim < 1 || m.hyper.hidden < 1 || m.hyper.attention < 1)
    throw FormatError(name + ": zero dimension in header");

  const auto d = static_cast<Eigen::Index>(m.dim);
  const auto h = static_cast<Eigen::Index>(m.hyper.hidden);
  const auto a = static_cast<Eigen::Index>(m.hyper.attention);
  auto& p = m.params;
  p.embed_w.resize(d, h);
  p.embed_b.resize(h);
  p.attn_V.resize(h, a);
  p.attn_w.resize(a);
  p.attn_U.resize(m.gated() ? h : 0, m.gated() ? a : 0);
  p.head_w.resize(h, 2);
  p.head_b.resize(2);
  Parameters::zip(
      [&](auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = read_le<double>(in, name);
      },
      p);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(name + ": trailing bytes");
  if (!p.all_finite()) throw FormatError(name + ": non-finite parameter");
  return m;
}

std::filesystem::path model_json_path_for(const std::filesystem::path& model_path) {
  auto p = model_path;
  p.replace_extension(".model.json");
  return p;
}

}  // namespace miladv
