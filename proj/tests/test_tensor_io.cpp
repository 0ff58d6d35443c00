#include <doctest.h>

#include "langdaug/errors.hpp"
#include "langdaug/tensor_io.hpp"

#include <filesystem>
#include <fstream>

using namespace langdaug;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "langdaug_test_tensor_io";
    fs::create_directories(dir);
    return dir / name;
}
}  // namespace

TEST_CASE("f64 roundtrip is exact") {
    Tensor t;
    t.dims = {2, 3, 4};
    t.data = Vector::LinSpaced(24, -1.0, 1.0);
    t.data[5] = 1e-300;
    write_ldtn(scratch("a.ldtn"), t);
    const auto back = read_ldtn(scratch("a.ldtn"));
    CHECK(back.dims == t.dims);
    CHECK(back.dtype == Dtype::f64);
    CHECK(back.data == t.data);
    CHECK(fs::file_size(scratch("a.ldtn")) == 4 + 4 + 3 * 8 + 24 * 8);
}

TEST_CASE("f32 roundtrip rounds to float") {
    Tensor t;
    t.dims = {3};
    t.data = Vector::Constant(3, 0.1);
    t.dtype = Dtype::f32;
    write_ldtn(scratch("b.ldtn"), t);
    const auto back = read_ldtn(scratch("b.ldtn"));
    CHECK(back.dtype == Dtype::f32);
    CHECK(back.data[0] == static_cast<double>(0.1f));
}

TEST_CASE("header layout") {
    Tensor t;
    t.dims = {1};
    t.data = Vector::Zero(1);
    write_ldtn(scratch("c.ldtn"), t);
    std::ifstream in(scratch("c.ldtn"), std::ios::binary);
    char head[8];
    in.read(head, 8);
    CHECK(std::string(head, 4) == "LDTN");
    CHECK(head[4] == 1);
    CHECK(head[5] == 1);
    CHECK(head[6] == 1);
}

TEST_CASE("corrupt files are rejected") {
    {
        std::ofstream out(scratch("bad.ldtn"), std::ios::binary);
        const char bytes[] = {'N', 'O', 'P', 'E', 1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0};
        out.write(bytes, sizeof bytes);
    }
    CHECK_THROWS_AS(read_ldtn(scratch("bad.ldtn")), FormatError);

    Tensor t;
    t.dims = {4};
    t.data = Vector::Zero(4);
    write_ldtn(scratch("trunc.ldtn"), t);
    fs::resize_file(scratch("trunc.ldtn"), fs::file_size(scratch("trunc.ldtn")) - 3);
    CHECK_THROWS_AS(read_ldtn(scratch("trunc.ldtn")), IoError);
    CHECK_THROWS_AS(read_ldtn(scratch("missing.ldtn")), IoError);

    t.dims = {5};
    CHECK_THROWS_AS(write_ldtn(scratch("mismatch.ldtn"), t), DimensionError);
}

TEST_CASE("sidecar path and json roundtrip") {
    CHECK(meta_path_for("dir/ebm_0_1.ldtn") == fs::path("dir/ebm_0_1.meta.json"));
    const nlohmann::json doc = {{"a", 1}, {"b", {1.5, 2.5}}};
    write_json(scratch("x.meta.json"), doc);
    CHECK(read_json(scratch("x.meta.json")) == doc);
    CHECK(file_checksum(scratch("x.meta.json")) == file_checksum(scratch("x.meta.json")));
    CHECK(file_checksum(scratch("x.meta.json")) != file_checksum(scratch("a.ldtn")));
}
