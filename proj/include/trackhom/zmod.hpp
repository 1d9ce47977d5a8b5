#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trackhom/error.hpp"
#include "trackhom/ints.hpp"

namespace trackhom {

// ----- dense matrices -----

struct IntMatrix {
  int rows = 0, cols = 0;
  std::vector<Integer> a;

  IntMatrix() = default;
  IntMatrix(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c)) {}

  Integer& at(int r, int c) { return a[size_t(r) * cols + c]; }
  const Integer& at(int r, int c) const { return a[size_t(r) * cols + c]; }

  static IntMatrix identity(int n);
  IntMatrix mul(const IntMatrix& o) const;
  bool operator==(const IntMatrix& o) const { return rows == o.rows && cols == o.cols && a == o.a; }
};

struct SnfResult {
  IntMatrix u, d, v;  // u * input * v == d, u and v unimodular
};

SnfResult smith_normal_form(const IntMatrix& m);
Integer determinant(const IntMatrix& m);

// ----- finitely generated abelian groups -----

// invariant_factors: d1 | d2 | ... with di >= 2, then zeros for free summands.
struct FinAbGroup {
  std::vector<Integer> invariant_factors;
  std::vector<std::string> generator_labels;

  int rank() const;
  Integer torsion_order() const;
  bool is_trivial() const { return invariant_factors.empty(); }
  std::string to_string() const;
};

bool iso_check(const FinAbGroup& g, const FinAbGroup& h);

// Normal form of a direct sum of cyclic groups with the given moduli (0 = free).
FinAbGroup normalize_factors(const std::vector<Integer>& moduli);

struct AbElement {
  FinAbGroup group;
  std::vector<Integer> coords;

  void reduce();
  bool is_zero() const;
  bool operator==(const AbElement& o) const;
};

AbElement ab_zero(const FinAbGroup& g);
AbElement ab_add(const AbElement& x, const AbElement& y);
AbElement ab_neg(const AbElement& x);

struct AbHom {
  FinAbGroup domain, codomain;
  IntMatrix matrix;  // codomain coords from domain coords

  AbElement apply(const AbElement& x) const;
  bool torsion_compatible() const;
};

AbHom hom_identity(const FinAbGroup& g);
AbHom hom_zero(const FinAbGroup& dom, const FinAbGroup& cod);
AbHom hom_compose(const AbHom& first, const AbHom& second);  // second(first(x))

// Cokernel of m as a map Z^cols -> Z^rows.
FinAbGroup cokernel_presentation(const IntMatrix& m);

// Direct sum of cyclic coordinates, not necessarily in normal form.
struct CoordModule {
  std::vector<Integer> moduli;  // 0 = free coordinate

  int size() const { return int(moduli.size()); }
  FinAbGroup to_group() const { return normalize_factors(moduli); }
};

// ----- sparse matrices, column major -----

using SpVec = std::vector<std::pair<int, Integer>>;  // sorted by index, nonzero values

SpVec spv_scaled_add(const SpVec& x, const SpVec& y, const Integer& k);  // x + k*y
SpVec spv_reduced(const SpVec& x, const std::vector<Integer>& moduli);
Integer spv_get(const SpVec& x, int i);
std::vector<Integer> spv_dense(const SpVec& x, int n);
SpVec spv_from_dense(const std::vector<Integer>& xs);

struct SparseMat {
  int rows = 0, cols = 0;
  std::vector<SpVec> col;

  SparseMat() = default;
  SparseMat(int r, int c) : rows(r), cols(c), col(c) {}

  void add_entry(int r, int c, const Integer& v);
  void finalize();  // sort and merge duplicate entries
  std::vector<Integer> apply(const std::vector<Integer>& x) const;
  bool is_zero_mod(const std::vector<Integer>& row_moduli) const;
};

SparseMat sp_compose(const SparseMat& first, const SparseMat& second);  // second * first
SparseMat sp_sub(const SparseMat& x, const SparseMat& y);
SparseMat sp_from_dense(const IntMatrix& m);

// ----- integer lattices inside Z^dim -----

struct Lattice {
  int dim = 0;
  std::vector<SpVec> basis;     // column HNF, pivot rows strictly increasing
  std::vector<int> pivot_rows;  // one per basis column
};

Lattice make_lattice(std::vector<SpVec> gens, int dim);
std::optional<std::vector<Integer>> lattice_solve(const Lattice& l, std::vector<Integer> x);

// Basis of {x in Z^cols : m*x = 0 componentwise mod row_moduli}, with the
// sublattice of dom_moduli multiples folded in.
std::vector<SpVec> kernel_cols(const SparseMat& m, const std::vector<Integer>& row_moduli,
                               const std::vector<Integer>& dom_moduli);

// ----- cochain complexes over Z -----

struct CochainComplexZ {
  std::vector<CoordModule> levels;
  std::vector<SparseMat> d;  // d[i] : levels[i] -> levels[i+1]
};

void check_complex(const CochainComplexZ& c);  // throws not_a_complex

// Presents ker(d_n)/im(d_{n-1}) and maps cocycles to classes and back.
struct RowOp {
  enum Kind { add, swap, negate } kind;
  int i = 0, j = 0;
  Integer k;
};

struct ClassMapper {
  FinAbGroup group;
  Lattice cocycles;
  std::vector<RowOp> ops;    // change of basis on cocycle coordinates
  std::vector<int> kept;     // positions carrying the reported factors
  std::vector<Integer> kept_factors;
  int level_dim = 0;

  AbElement classify(const std::vector<Integer>& cochain) const;
  std::vector<Integer> representative(int k) const;  // cocycle for generator k
};

FinAbGroup cohomology_at(const CochainComplexZ& c, int n);
ClassMapper cohomology_mapper(const CochainComplexZ& c, int n);

// ----- preimages -----

// Solves h(x) = y; deterministic canonical solution, reduced against the
// kernel lattice of h. The alt rule shifts by a kernel generator when one
// exists, for checking choice independence downstream.
std::optional<AbElement> solve_preimage(const AbHom& h, const AbElement& y);
std::optional<AbElement> solve_preimage_alt(const AbHom& h, const AbElement& y);

}  // namespace trackhom
