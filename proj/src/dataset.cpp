#include "scnp/dataset.hpp"

#include <cstring>
#include <fstream>

namespace scnp {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("dataset: truncated file");
  return v;
}

void put_floats(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void take_floats(std::istream& is, std::size_t n, std::vector<float>* v) {
  v->resize(n);
  is.read(reinterpret_cast<char*>(v->data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw DataError("dataset: truncated float block");
}

}  // namespace

void write_dataset(const std::string& path, const SceneDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("dataset: cannot open " + path + " for writing");
  os.write("SCN1", 4);
  put<std::uint32_t>(os, kDatasetVersion);
  put<double>(os, ds.grid.origin_x);
  put<double>(os, ds.grid.origin_y);
  put<double>(os, ds.grid.resolution);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.grid.height));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.grid.width));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.n_scenes));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.frames_per_scene));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.feature_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.frames.size()));
  const std::size_t cells = static_cast<std::size_t>(ds.grid.cell_count());
  for (const auto& f : ds.frames) {
    put<double>(os, f.pose.x);
    put<double>(os, f.pose.y);
    put<double>(os, f.pose.z);
    put<double>(os, f.pose.yaw);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.points.size()));
    os.write(reinterpret_cast<const char*>(f.points.data()),
             static_cast<std::streamsize>(f.points.size() * 3 * sizeof(float)));
    put<std::uint8_t>(os, f.has_semantics ? 1 : 0);
    if (f.has_semantics) {
      if (f.semantics.size() !=
              cells * static_cast<std::size_t>(ds.feature_dim) ||
          f.density.size() != cells) {
        throw DataError("dataset: semantic block size mismatch");
      }
      put_floats(os, f.semantics);
      put_floats(os, f.density);
    }
    if (f.gt.size() != cells) throw DataError("dataset: gt block size mismatch");
    put_floats(os, f.gt);
  }
  if (!os) throw DataError("dataset: write failed for " + path);
}

SceneDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("dataset: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SCN1", 4) != 0) {
    throw DataError("dataset: bad magic in " + path);
  }
  const auto version = take<std::uint32_t>(is);
  if (version != kDatasetVersion) {
    throw DataError("dataset: unsupported version " + std::to_string(version));
  }
  SceneDataset ds;
  ds.grid.origin_x = take<double>(is);
  ds.grid.origin_y = take<double>(is);
  ds.grid.resolution = take<double>(is);
  ds.grid.height = static_cast<int>(take<std::uint32_t>(is));
  ds.grid.width = static_cast<int>(take<std::uint32_t>(is));
  ds.n_scenes = static_cast<int>(take<std::uint32_t>(is));
  ds.frames_per_scene = static_cast<int>(take<std::uint32_t>(is));
  ds.feature_dim = static_cast<int>(take<std::uint32_t>(is));
  const auto total = take<std::uint32_t>(is);
  ds.grid.validate();
  const std::size_t cells = static_cast<std::size_t>(ds.grid.cell_count());
  ds.frames.resize(total);
  for (auto& f : ds.frames) {
    f.pose.x = take<double>(is);
    f.pose.y = take<double>(is);
    f.pose.z = take<double>(is);
    f.pose.yaw = take<double>(is);
    const auto count = take<std::uint32_t>(is);
    f.points.resize(count);
    is.read(reinterpret_cast<char*>(f.points.data()),
            static_cast<std::streamsize>(count * 3 * sizeof(float)));
    if (!is) throw DataError("dataset: truncated point block");
    f.has_semantics = take<std::uint8_t>(is) != 0;
    if (f.has_semantics) {
      take_floats(is, cells * static_cast<std::size_t>(ds.feature_dim),
                  &f.semantics);
      take_floats(is, cells, &f.density);
    }
    take_floats(is, cells, &f.gt);
  }
  return ds;
}

}  // namespace scnp
