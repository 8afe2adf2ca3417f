#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "drlrt/errors.hpp"
#include "drlrt/io.hpp"
#include "drlrt/rng.hpp"

using namespace drlrt;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("drlrt_io_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("csv parses header and numeric cells") {
  std::istringstream in("x,yy\n1,2.5\n-3e2,0.125\n");
  const CsvTable t = read_csv(in, "mem");
  CHECK(t.header == std::vector<std::string>{"x", "yy"});
  CHECK(t.rows == 2);
  CHECK(t.at(0, 1) == 2.5);
  CHECK(t.at(1, 0) == -300.0);
  CHECK(t.column("yy") == 1);
  CHECK_THROWS_AS(t.column("z"), SchemaMismatch);
}

TEST_CASE("csv rejects ragged rows, bad cells, and non-finite values") {
  auto parse = [](const std::string& body) {
    std::istringstream in(body);
    return read_csv(in, "mem");
  };
  CHECK_THROWS_AS(parse("a,b\n1\n"), SchemaMismatch);
  CHECK_THROWS_AS(parse("a\nx\n"), SchemaMismatch);
  CHECK_THROWS_AS(parse("a\n 1\n"), SchemaMismatch);  // leading space
  CHECK_THROWS_AS(parse("a\n1.5extra\n"), SchemaMismatch);
  CHECK_THROWS_AS(parse("a\nnan\n"), SchemaMismatch);
  CHECK_THROWS_AS(parse("a\ninf\n"), SchemaMismatch);
  CHECK_THROWS_AS(parse(""), SchemaMismatch);
  CHECK(parse("a\n\n1\n").rows == 1);  // blank lines are skipped
}

TEST_CASE("csv accepts CRLF line endings") {
  std::istringstream in("a,b\r\n1,2\r\n");
  const CsvTable t = read_csv(in, "mem");
  CHECK(t.rows == 1);
  CHECK(t.at(0, 1) == 2.0);
}

TEST_CASE("format_double round-trips random doubles exactly") {
  StreamRng rng(99, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const double x = rng.normal() * std::pow(10.0, std::floor(rng.uniform() * 20.0) - 10.0);
    const std::string s = format_double(x);
    std::istringstream in("v\n" + s + "\n");
    const CsvTable t = read_csv(in, "mem");
    CHECK(t.at(0, 0) == x);
  }
  CHECK(format_double(7.0) == "7");
}

TEST_CASE("dataset csv round-trip is exact") {
  Dataset data;
  data.d = 2;
  StreamRng rng(7, 1);
  for (int i = 0; i < 25; ++i) {
    data.y.push_back(rng.normal());
    data.a.push_back(rng.normal() * 3.0);
    data.l.push_back(rng.normal());
    data.l.push_back(rng.normal());
  }
  const auto path = temp_file("roundtrip.csv");
  write_dataset_csv(path.string(), data);
  const Dataset back = read_dataset_csv(path.string());
  CHECK(back.d == 2);
  CHECK(back.y == data.y);
  CHECK(back.a == data.a);
  CHECK(back.l == data.l);
  std::filesystem::remove(path);
}

TEST_CASE("dataset csv names the missing column") {
  const auto path = temp_file("missing.csv");
  write_file(path, "y,l1\n1,2\n");
  try {
    read_dataset_csv(path.string());
    CHECK(false);
  } catch (const SchemaMismatch& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("dataset csv rejects unexpected and gapped columns") {
  const auto extra = temp_file("extra.csv");
  write_file(extra, "y,a,weight\n1,2,3\n");
  CHECK_THROWS_AS(read_dataset_csv(extra.string()), SchemaMismatch);
  std::filesystem::remove(extra);

  // l2 without l1 is not a valid confounder block.
  const auto gap = temp_file("gap.csv");
  write_file(gap, "y,a,l2\n1,2,3\n");
  CHECK_THROWS_AS(read_dataset_csv(gap.string()), SchemaMismatch);
  std::filesystem::remove(gap);
}

TEST_CASE("dataset csv accepts any column order and d = 0") {
  const auto path = temp_file("order.csv");
  write_file(path, "l1,y,a\n5,1,2\n6,3,4\n");
  const Dataset data = read_dataset_csv(path.string());
  CHECK(data.d == 1);
  CHECK(data.y == std::vector<double>{1.0, 3.0});
  CHECK(data.a == std::vector<double>{2.0, 4.0});
  CHECK(data.l == std::vector<double>{5.0, 6.0});
  std::filesystem::remove(path);

  const auto bare = temp_file("bare.csv");
  write_file(bare, "y,a\n1,2\n");
  CHECK(read_dataset_csv(bare.string()).d == 0);
  std::filesystem::remove(bare);
}

TEST_CASE("matrix csv round-trip and shape checks") {
  const Matrix m{2, 3, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}};
  const auto path = temp_file("matrix.csv");
  write_matrix_csv(path.string(), m);
  const Matrix back = read_matrix_csv(path.string());
  CHECK(back.rows == 2);
  CHECK(back.cols == 3);
  CHECK(back.cells == m.cells);
  std::filesystem::remove(path);

  const auto ragged = temp_file("ragged.csv");
  write_file(ragged, "1,2\n3\n");
  CHECK_THROWS_AS(read_matrix_csv(ragged.string()), SchemaMismatch);
  std::filesystem::remove(ragged);
}

TEST_CASE("dataset subset and validation") {
  Dataset data;
  data.d = 1;
  data.y = {1.0, 2.0, 3.0};
  data.a = {4.0, 5.0, 6.0};
  data.l = {7.0, 8.0, 9.0};
  const Dataset sub = data.subset({2, 0});
  CHECK(sub.y == std::vector<double>{3.0, 1.0});
  CHECK(sub.a == std::vector<double>{6.0, 4.0});
  CHECK(sub.l == std::vector<double>{9.0, 7.0});
  CHECK_THROWS_AS(data.subset({3}), IndexOutOfRange);

  Dataset bad = data;
  bad.y.pop_back();
  CHECK_THROWS_AS(bad.validate(), LengthMismatch);
  Dataset nonfinite = data;
  nonfinite.a[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nonfinite.validate(), SchemaMismatch);
}

TEST_SUITE_END();
