#ifndef FERMIVOL_DIAGRAMS_HPP
#define FERMIVOL_DIAGRAMS_HPP

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fermivol {

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

// Multigraph with explicit half-edge accounting: a vertex of degree 4 is an
// interaction vertex, degree 2 a generalized two-legged vertex. Self-loops
// are allowed (both endpoints count toward the degree).
struct FeynmanGraph {
    struct Line {
        int u = 0, v = 0;
    };
    int n_vertices = 0;
    std::vector<Line> lines;       // internal lines
    std::vector<int> external;     // vertex index per external leg

    int order() const { return n_vertices; }
    int degree(int v) const;
    bool connected() const;
    // no single internal line whose removal separates the external legs
    bool one_particle_irreducible() const;
    // every vertex must have degree 4 or 2 (counting external legs)
    void validate() const;
};

// Text format: one line per internal line "u v", external legs "X v".
// Vertices are implicit (0-based indices).
FeynmanGraph parse_graph(std::istream& in);
FeynmanGraph parse_graph_string(const std::string& text);
std::string format_graph(const FeynmanGraph& g);

// Canonical small graphs used throughout the tests.
FeynmanGraph sunset_graph();   // 2 vertices, 3 parallel lines, 2 external legs
FeynmanGraph bubble_graph();   // 2 vertices, 2 parallel lines, 4 external legs

// ---------------------------------------------------------------------------
// Scales and forests
// ---------------------------------------------------------------------------

using ScaleAssignment = std::vector<int>;  // one negative scale per line

struct Fork {
    std::vector<int> lines;  // sorted line indices of G_f
    int scale = 0;           // j_f = min scale over the fork's lines
    int parent = -1;         // index into GNForest::forks, -1 for the root
    int external_legs = 0;   // E_f
    int n_vertices = 0;      // n_f
    char label = 0;          // 'r', 'c' or 0 for unlabeled
};

struct GNForest {
    std::vector<Fork> forks;  // root first, then sorted by (size desc, lines)
    int root() const { return 0; }
    int root_scale() const { return forks.empty() ? 0 : forks[0].scale; }
    // true if a and b are shape-equal (same nested line sets, labels ignored)
    bool shape_equals(const GNForest& other) const;
};

// The hierarchy of connected components of G^{(>= j)} over all j.
GNForest build_forest(const FeynmanGraph& g, const ScaleAssignment& scales);

// Forest shape for label enumeration: nested line sets without scales. The
// root (all lines) is implicit and must not be listed.
struct ForestShape {
    std::vector<std::vector<int>> proper_forks;  // each sorted, strictly nested or disjoint
};

struct LabelMap {
    // key: index into ForestShape::proper_forks; value 'r' or 'c'
    std::map<int, char> labels;
};

struct EnumerationResult {
    std::vector<ScaleAssignment> assignments;
    bool inconsistent = false;  // (shape, labels) unsatisfiable as given
};

// All scale assignments with root scale j_root and scales in [j_floor, -1]
// that realize the given forest shape and respect the renormalization
// labels: unlabeled and 'r' forks need j_f > j_parent, 'c' forks j_f <=
// j_parent. For label-free shapes this is exactly the set of J with
// build_forest(g, J) shape-equal to the input.
EnumerationResult enumerate_labelings(const FeynmanGraph& g, int j_root, int j_floor,
                                      const ForestShape& shape, const LabelMap& labels);

// ---------------------------------------------------------------------------
// Trees and loops
// ---------------------------------------------------------------------------

// Spanning tree T such that T intersected with every fork's line set spans
// that fork: greedy over lines in decreasing scale order, ties by index.
std::vector<int> choose_spanning_tree(const FeynmanGraph& g, const GNForest& forest);

// The fundamental loop of a non-tree line: the line plus the tree path
// joining its endpoints.
std::vector<int> loop_of_line(const FeynmanGraph& g, const std::vector<int>& tree, int line);
// Tree path joining the two external legs of a two-legged graph.
std::vector<int> external_path(const FeynmanGraph& g, const std::vector<int>& tree);

struct OverlappingTriple {
    int tree_line = 0;
    int loop_line_1 = 0, loop_line_2 = 0;
};

// A tree line lying on two distinct fundamental loops, if any: tree lines
// scanned in decreasing scale (per `scales`; index order when absent),
// loop pairs by index.
std::optional<OverlappingTriple> find_overlapping_triple(
    const FeynmanGraph& g, const std::vector<int>& tree,
    const ScaleAssignment* scales = nullptr);

// ---------------------------------------------------------------------------
// Four-point classification
// ---------------------------------------------------------------------------

enum class FourPointClass { ladder, overlapping };

// Ladder iff after contracting all two-legged subdiagrams (strings) the graph
// is a chain of vertices joined pairwise by exactly two lines.
FourPointClass classify_four_legged(const FeynmanGraph& g);

// ---------------------------------------------------------------------------
// Power counting
// ---------------------------------------------------------------------------

enum class GraphClass { two_legged, ladder, overlapping_four_legged, higher };

struct ForkLedgerRow {
    std::vector<int> lines;
    int external_legs = 0;
    int scale = 0, parent_scale = 0;
    double exponent = 0.0;      // (1/2)(j_f - j_parent)(4 - E_f)
    std::string scale_sum;      // "|j|", "1/(M-1)" or "insertion"
};

struct PowerCountingReport {
    GraphClass classification = GraphClass::two_legged;
    double root_exponent = 0.0;      // (1/2) j (4 - E_root)
    std::vector<ForkLedgerRow> forks;
    double m_power = 0.0;            // exponent of M^j in the final bound
    int abs_j_power = 0;             // power of |j| in the final bound
    int n_insertions = 0;            // pruned two-legged subdiagrams
    double symmetry_factor = 1.0;    // prod 1/b_f! over the forest (bookkeeping only)
    int discount_line = -1;          // derivative bounds: line carrying M^{eps j}
};

// Exponent ledger of the fixed-root-scale bound: root factor M^{j(4-E)/2},
// per-fork factors M^{(j_f - j_parent)(4 - E_f)/2}, geometric scale sums
// performed bottom-up. For a two-legged graph with s0 = s = 0 the final
// bound is M^j |j|^{3n-2}.
PowerCountingReport power_count_bound(const FeynmanGraph& g, const GNForest& forest,
                                      double M, int s0, int s);

// Improved derivative bound for two-legged graphs: exponent
// (1 - s0 - s1 + eps [s0 + s1 >= 1]) j, with the M^{eps j} discount absorbed
// at an overlapping tree line.
PowerCountingReport derivative_bound_report(const FeynmanGraph& g, const GNForest& forest,
                                            double M, int s0, int s1, double eps);

std::string format_report(const PowerCountingReport& report);

}  // namespace fermivol

#endif
