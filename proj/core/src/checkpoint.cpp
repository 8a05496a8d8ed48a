// SPDX-License-Identifier: Apache-2.0
#include "urm/checkpoint.hpp"

#include "binio.hpp"

namespace urm {

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::ByteWriter w;
  w.str("URM1");
  w.u32(ck.version);
  w.u32(static_cast<std::uint32_t>(ck.config_text.size()));
  w.str(ck.config_text);
  w.u64(ck.step);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.precision()));
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    if (t.precision() == Precision::f32) {
      const float* p = t.cdata<float>();
      for (std::size_t i = 0; i < t.numel(); ++i) w.f32(p[i]);
    } else {
      const double* p = t.cdata<double>();
      for (std::size_t i = 0; i < t.numel(); ++i) w.f64(p[i]);
    }
  }
  detail::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::string& path) {
  detail::ByteReader r(detail::read_file(path));
  Checkpoint ck;
  const std::string magic = r.str(4, "magic");
  if (magic != "URM1")
    throw ParseError("bad magic '" + magic + "', expected 'URM1'", 0);
  ck.version = r.u32("version");
  if (ck.version != 1)
    throw ParseError("unsupported checkpoint version " +
                         std::to_string(ck.version),
                     4);
  const std::uint32_t cfg_len = r.u32("config length");
  ck.config_text = r.str(cfg_len, "config text");
  ck.step = r.u64("step counter");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype > 1)
      throw ParseError("tensor '" + name + "': unknown dtype code " +
                           std::to_string(dtype),
                       r.offset() - 1);
    const Precision p = static_cast<Precision>(dtype);
    const std::uint8_t rank = r.u8("rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(r.u32("dim"));
    Tensor t = Tensor::zeros(shape, p);
    if (p == Precision::f32) {
      float* dst = t.mutable_data<float>();
      r.need(t.numel() * 4, "tensor payload");
      for (std::size_t e = 0; e < t.numel(); ++e) dst[e] = r.f32("payload");
    } else {
      double* dst = t.mutable_data<double>();
      r.need(t.numel() * 8, "tensor payload");
      for (std::size_t e = 0; e < t.numel(); ++e) dst[e] = r.f64("payload");
    }
    ck.tensors.emplace_back(name, std::move(t));
  }
  if (!r.exhausted())
    throw ParseError("trailing bytes after last tensor", r.offset());
  return ck;
}

std::map<std::string, Tensor> tensor_map(const Checkpoint& ck) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : ck.tensors) out.emplace(name, t);
  return out;
}

void apply_checkpoint(pipeline::AnticipationModel& model,
                      const Checkpoint& ck) {
  auto named = tensor_map(ck);
  nn::ParamList params = model.parameters();
  for (auto& [name, param] : params) {
    const auto it = named.find(name);
    if (it == named.end())
      throw Error("checkpoint is missing parameter '" + name + "'");
    const Tensor& src = it->second;
    if (src.shape() != param.shape())
      throw Error("checkpoint parameter '" + name + "' has shape " +
                  shape_str(src.shape()) + ", model expects " +
                  shape_str(param.shape()));
    if (src.precision() != param.precision())
      throw Error("checkpoint parameter '" + name + "' is " +
                  precision_name(src.precision()) + ", model expects " +
                  precision_name(param.precision()));
    param.mutable_storage() = src.storage();
    named.erase(it);
  }
  for (const auto& [name, t] : named) {
    if (name.rfind("opt.", 0) != 0)
      throw Error("checkpoint holds unknown tensor '" + name + "'");
  }
}

}  // namespace urm
