#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "byte_io.hpp"
#include "sopt/net.hpp"

// Layout: "SOPT", u16 version, u32 C/H/W, u32 classes, u32 layer count,
// per layer u32 tag + u32 dims, u32 class-name count + (u32 length, UTF-8
// bytes) each, then every parameter tensor as a TENS1 block.

namespace sopt {

namespace {

enum LayerTag : std::uint32_t { kConv = 0, kReLU = 1, kMaxPool2 = 2, kFlatten = 3, kDense = 4 };

void put_string(std::ostream& out, const std::string& s) {
  detail::put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = detail::get_u32(in);
  if (static_cast<std::streamsize>(len) > in.rdbuf()->in_avail()) throw FormatError("truncated string");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw FormatError("truncated input");
  return s;
}

}  // namespace

std::string checkpoint_bytes(const RecognitionNet& net) {
  std::ostringstream out(std::ios::binary);
  out.write("SOPT", 4);
  detail::put_u16(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(net.input.channels));
  detail::put_u32(out, static_cast<std::uint32_t>(net.input.height));
  detail::put_u32(out, static_cast<std::uint32_t>(net.input.width));
  detail::put_u32(out, static_cast<std::uint32_t>(net.classes));
  detail::put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& spec : net.layers) {
    if (const auto* c = std::get_if<layer::Conv>(&spec)) {
      detail::put_u32(out, kConv);
      for (auto v : {c->out_channels, c->kernel, c->stride, c->pad}) detail::put_u32(out, static_cast<std::uint32_t>(v));
    } else if (std::holds_alternative<layer::ReLU>(spec)) {
      detail::put_u32(out, kReLU);
    } else if (std::holds_alternative<layer::MaxPool2>(spec)) {
      detail::put_u32(out, kMaxPool2);
    } else if (std::holds_alternative<layer::Flatten>(spec)) {
      detail::put_u32(out, kFlatten);
    } else {
      detail::put_u32(out, kDense);
      detail::put_u32(out, static_cast<std::uint32_t>(std::get<layer::Dense>(spec).out_features));
    }
  }
  detail::put_u32(out, static_cast<std::uint32_t>(net.class_names.size()));
  for (const auto& name : net.class_names) put_string(out, name);
  for (const auto& layer_params : net.params)
    for (const auto& p : layer_params) write_tens(out, p);
  return out.str();
}

RecognitionNet checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 4) throw CheckpointError(CheckpointErrorCode::Truncation, "checkpoint: truncated header");
  if (std::memcmp(bytes.data(), "SOPT", 4) != 0)
    throw CheckpointError(CheckpointErrorCode::BadMagic, "checkpoint: bad magic '" + bytes.substr(0, 4) + "'");
  std::istringstream in(bytes.substr(4), std::ios::binary);
  try {
    const auto version = detail::get_u16(in);
    if (version != kCheckpointVersion)
      throw CheckpointError(CheckpointErrorCode::VersionMismatch,
                            "checkpoint: version " + std::to_string(version) + ", expected " +
                                std::to_string(kCheckpointVersion));
    ImageShape input;
    input.channels = detail::get_u32(in);
    input.height = detail::get_u32(in);
    input.width = detail::get_u32(in);
    const std::size_t classes = detail::get_u32(in);
    const std::size_t n_layers = detail::get_u32(in);
    if (n_layers > 4096) throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint: implausible layer count");
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i < n_layers; ++i) {
      switch (detail::get_u32(in)) {
        case kConv: {
          layer::Conv c;
          c.out_channels = detail::get_u32(in);
          c.kernel = detail::get_u32(in);
          c.stride = detail::get_u32(in);
          c.pad = detail::get_u32(in);
          layers.emplace_back(c);
          break;
        }
        case kReLU: layers.emplace_back(layer::ReLU{}); break;
        case kMaxPool2: layers.emplace_back(layer::MaxPool2{}); break;
        case kFlatten: layers.emplace_back(layer::Flatten{}); break;
        case kDense: layers.emplace_back(layer::Dense{detail::get_u32(in)}); break;
        default: throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint: unknown layer tag");
      }
    }
    const std::size_t n_names = detail::get_u32(in);
    if (n_names != classes)
      throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint: class-name count does not match classes");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n_names; ++i) names.push_back(get_string(in));

    // Build the expected skeleton, then replace its parameters.
    RecognitionNet net;
    try {
      net = build_net(layers, input, classes, 0, names);
    } catch (const ShapeError& e) {
      throw CheckpointError(CheckpointErrorCode::Malformed, std::string("checkpoint: ") + e.what());
    }
    for (auto& layer_params : net.params)
      for (auto& p : layer_params) {
        Tensor t = read_tens(in);
        if (t.shape() != p.shape())
          throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint: parameter shape " + shape_str(t.shape()) +
                                                                    " where " + shape_str(p.shape()) + " expected");
        p = std::move(t);
      }
    if (in.peek() != std::char_traits<char>::eof())
      throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint: trailing bytes");
    return net;
  } catch (const CheckpointError&) {
    throw;
  } catch (const FormatError& e) {
    const std::string what = e.what();
    if (what.find("truncated") != std::string::npos)
      throw CheckpointError(CheckpointErrorCode::Truncation, "checkpoint: " + what);
    throw CheckpointError(CheckpointErrorCode::Malformed, "checkpoint: " + what);
  }
}

void save_checkpoint(const RecognitionNet& net, const std::string& path) {
  const std::string bytes = checkpoint_bytes(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorCode::Io, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorCode::Io, "write failed for " + path);
}

RecognitionNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("checkpoint not found: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace sopt
