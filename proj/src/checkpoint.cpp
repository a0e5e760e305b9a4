#include "oodrl/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "oodrl/error.hpp"
#include "oodrl/io.hpp"

namespace oodrl {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("checkpoint: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

double get_f32(std::string_view in, std::size_t& pos) {
  return static_cast<double>(std::bit_cast<float>(get_u32(in, pos)));
}

json output_to_json(const nn::OutputActivation& o) {
  if (o.kind == nn::OutputActivation::Kind::tanh_scaled)
    return {{"kind", "tanh_scaled"}, {"bound", o.bound}};
  return {{"kind", "identity"}};
}

}  // namespace

json spec_to_json(const nn::NetworkSpec& spec) {
  json acts = json::array();
  for (auto a : spec.activations) acts.push_back(nn::to_string(a));
  return {{"layer_dims", spec.layer_dims},
          {"activations", acts},
          {"output", output_to_json(spec.output)},
          {"stochastic",
           {{"kind", nn::to_string(spec.stochastic.kind)}, {"rate", spec.stochastic.rate}}}};
}

nn::NetworkSpec spec_from_json(const json& j) {
  nn::NetworkSpec s;
  try {
    s.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    for (const auto& a : j.at("activations")) s.activations.push_back(nn::activation_from_string(a));
    const auto& o = j.at("output");
    if (o.at("kind") == "tanh_scaled")
      s.output = nn::OutputActivation::tanh_scaled(o.at("bound").get<double>());
    else if (o.at("kind") == "identity")
      s.output = nn::OutputActivation::identity();
    else
      throw SpecError("unknown output activation");
    const auto& st = j.at("stochastic");
    s.stochastic.kind = nn::stochastic_from_string(st.at("kind").get<std::string>());
    s.stochastic.rate = st.value("rate", 0.0);
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed network spec: ") + e.what());
  }
  s.validate();
  return s;
}

Checkpoint make_checkpoint(const nn::Network& net, std::uint64_t seed, json metadata) {
  std::vector<nn::Matrix> weights;
  std::vector<nn::Vector> biases;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    weights.push_back(net.weights()[l].cast<float>().cast<double>());
    biases.push_back(net.biases()[l].cast<float>().cast<double>());
  }
  return {nn::Network(net.spec(), std::move(weights), std::move(biases)), seed,
          std::move(metadata)};
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const json header = {{"spec", spec_to_json(ckpt.network.spec())},
                       {"seed", ckpt.seed},
                       {"training", ckpt.metadata}};
  const std::string text = header.dump();
  std::string out = "ORLB";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto& net = ckpt.network;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    const auto& w = net.weights()[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) put_f32(out, w(i, j));
    const auto& b = net.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) put_f32(out, b(i));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "ORLB")
    throw DataError("checkpoint: bad magic bytes");
  std::size_t pos = 4;
  const auto version = get_u32(bytes, pos);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = get_u32(bytes, pos);
  if (pos + header_len > bytes.size()) throw DataError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  pos += header_len;
  const nn::NetworkSpec spec = spec_from_json(header.at("spec"));

  std::vector<nn::Matrix> weights;
  std::vector<nn::Vector> biases;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto rows = static_cast<Eigen::Index>(spec.layer_dims[l + 1]);
    const auto cols = static_cast<Eigen::Index>(spec.layer_dims[l]);
    nn::Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = get_f32(bytes, pos);
    nn::Vector b(rows);
    for (Eigen::Index i = 0; i < rows; ++i) b(i) = get_f32(bytes, pos);
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
  if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes after payload");

  Checkpoint ckpt{nn::Network(spec, std::move(weights), std::move(biases)),
                  header.value("seed", std::uint64_t{0}),
                  header.value("training", json::object())};
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::atomic_write(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing checkpoint " + path.string());
  return decode_checkpoint(io::read_file(path));
}

}  // namespace oodrl
