#include "fermivol/diagrams.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fermivol {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

std::vector<int> fork_vertices(const FeynmanGraph& g, const std::vector<int>& lines) {
    std::set<int> vs;
    for (int li : lines) {
        vs.insert(g.lines[li].u);
        vs.insert(g.lines[li].v);
    }
    return {vs.begin(), vs.end()};
}

int external_leg_count(const FeynmanGraph& g, const std::vector<int>& lines) {
    std::set<int> in_fork(lines.begin(), lines.end());
    std::set<int> vs;
    for (int li : lines) {
        vs.insert(g.lines[li].u);
        vs.insert(g.lines[li].v);
    }
    int count = 0;
    for (int leg : g.external)
        if (vs.count(leg)) ++count;
    for (int li = 0; li < static_cast<int>(g.lines.size()); ++li) {
        if (in_fork.count(li)) continue;
        if (vs.count(g.lines[li].u)) ++count;
        if (vs.count(g.lines[li].v)) ++count;
    }
    return count;
}

}  // namespace

// ---------------------------------------------------------------------------
// FeynmanGraph
// ---------------------------------------------------------------------------

int FeynmanGraph::degree(int v) const {
    int deg = 0;
    for (const auto& ln : lines) {
        if (ln.u == v) ++deg;
        if (ln.v == v) ++deg;
    }
    for (int leg : external)
        if (leg == v) ++deg;
    return deg;
}

bool FeynmanGraph::connected() const {
    if (n_vertices == 0) return false;
    UnionFind uf(n_vertices);
    for (const auto& ln : lines) uf.unite(ln.u, ln.v);
    int root = uf.find(0);
    for (int v = 1; v < n_vertices; ++v)
        if (uf.find(v) != root) return false;
    return true;
}

bool FeynmanGraph::one_particle_irreducible() const {
    if (!connected()) return false;
    // removing any single internal line must keep all external legs connected
    for (std::size_t cut = 0; cut < lines.size(); ++cut) {
        UnionFind uf(n_vertices);
        for (std::size_t li = 0; li < lines.size(); ++li)
            if (li != cut) uf.unite(lines[li].u, lines[li].v);
        if (external.size() >= 2) {
            int root = uf.find(external[0]);
            for (std::size_t e = 1; e < external.size(); ++e)
                if (uf.find(external[e]) != root) return false;
        } else {
            int root = uf.find(0);
            for (int v = 1; v < n_vertices; ++v)
                if (uf.find(v) != root) return false;
        }
    }
    return true;
}

void FeynmanGraph::validate() const {
    if (n_vertices <= 0) throw std::invalid_argument("graph: no vertices");
    for (const auto& ln : lines)
        if (ln.u < 0 || ln.u >= n_vertices || ln.v < 0 || ln.v >= n_vertices)
            throw std::invalid_argument("graph: line endpoint out of range");
    for (int leg : external)
        if (leg < 0 || leg >= n_vertices)
            throw std::invalid_argument("graph: external leg out of range");
    for (int v = 0; v < n_vertices; ++v) {
        int deg = degree(v);
        if (deg != 4 && deg != 2)
            throw std::invalid_argument("graph: vertex degree must be 4 or 2");
    }
    if (!connected()) throw std::invalid_argument("graph: not connected");
}

FeynmanGraph parse_graph(std::istream& in) {
    FeynmanGraph g;
    std::string linebuf;
    while (std::getline(in, linebuf)) {
        auto hash = linebuf.find('#');
        if (hash != std::string::npos) linebuf.erase(hash);
        std::istringstream ls(linebuf);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "X") {
            int v;
            if (!(ls >> v)) throw std::invalid_argument("graph parse: bad external leg");
            g.external.push_back(v);
            g.n_vertices = std::max(g.n_vertices, v + 1);
        } else {
            int u = std::stoi(first), v;
            if (!(ls >> v)) throw std::invalid_argument("graph parse: bad line");
            g.lines.push_back({u, v});
            g.n_vertices = std::max({g.n_vertices, u + 1, v + 1});
        }
    }
    return g;
}

FeynmanGraph parse_graph_string(const std::string& text) {
    std::istringstream in(text);
    return parse_graph(in);
}

std::string format_graph(const FeynmanGraph& g) {
    std::ostringstream out;
    for (const auto& ln : g.lines) out << ln.u << ' ' << ln.v << '\n';
    for (int leg : g.external) out << "X " << leg << '\n';
    return out.str();
}

FeynmanGraph sunset_graph() {
    FeynmanGraph g;
    g.n_vertices = 2;
    g.lines = {{0, 1}, {0, 1}, {0, 1}};
    g.external = {0, 1};
    return g;
}

FeynmanGraph bubble_graph() {
    FeynmanGraph g;
    g.n_vertices = 2;
    g.lines = {{0, 1}, {0, 1}};
    g.external = {0, 0, 1, 1};
    return g;
}

// ---------------------------------------------------------------------------
// Forest construction
// ---------------------------------------------------------------------------

GNForest build_forest(const FeynmanGraph& g, const ScaleAssignment& scales) {
    if (scales.size() != g.lines.size())
        throw std::invalid_argument("build_forest: scale assignment must cover every line");
    for (int s : scales)
        if (s >= 0) throw std::invalid_argument("build_forest: scales must be negative");
    if (!g.connected()) throw std::invalid_argument("build_forest: graph must be connected");

    std::vector<int> distinct(scales.begin(), scales.end());
    std::sort(distinct.begin(), distinct.end(), std::greater<int>());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::set<std::vector<int>> fork_sets;
    for (int j : distinct) {
        // connected components of G^{(>= j)}
        UnionFind uf(g.n_vertices);
        for (std::size_t li = 0; li < g.lines.size(); ++li)
            if (scales[li] >= j) uf.unite(g.lines[li].u, g.lines[li].v);
        std::map<int, std::vector<int>> comps;
        for (std::size_t li = 0; li < g.lines.size(); ++li)
            if (scales[li] >= j) comps[uf.find(g.lines[li].u)].push_back(static_cast<int>(li));
        for (auto& [rep, ls] : comps) fork_sets.insert(ls);
    }

    GNForest forest;
    std::vector<std::vector<int>> sets(fork_sets.begin(), fork_sets.end());
    std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a < b;
    });
    for (const auto& ls : sets) {
        Fork f;
        f.lines = ls;
        f.scale = scales[ls[0]];
        for (int li : ls) f.scale = std::min(f.scale, scales[li]);
        f.external_legs = external_leg_count(g, ls);
        f.n_vertices = static_cast<int>(fork_vertices(g, ls).size());
        forest.forks.push_back(std::move(f));
    }
    // parents: smallest strict superset; sets are sorted by size descending
    for (std::size_t i = 0; i < forest.forks.size(); ++i) {
        const auto& child = forest.forks[i].lines;
        int best = -1;
        std::size_t best_size = g.lines.size() + 1;
        for (std::size_t p = 0; p < forest.forks.size(); ++p) {
            if (p == i) continue;
            const auto& sup = forest.forks[p].lines;
            if (sup.size() <= child.size()) continue;
            if (std::includes(sup.begin(), sup.end(), child.begin(), child.end()) &&
                sup.size() < best_size) {
                best = static_cast<int>(p);
                best_size = sup.size();
            }
        }
        forest.forks[i].parent = best;
    }
    return forest;
}

bool GNForest::shape_equals(const GNForest& other) const {
    if (forks.size() != other.forks.size()) return false;
    std::set<std::vector<int>> a, b;
    for (const auto& f : forks) a.insert(f.lines);
    for (const auto& f : other.forks) b.insert(f.lines);
    return a == b;
}

// ---------------------------------------------------------------------------
// Labeled scale enumeration
// ---------------------------------------------------------------------------

namespace {

struct ShapeTree {
    // node 0 is the implicit root; node i >= 1 is proper fork i-1
    std::vector<std::vector<int>> children;
    std::vector<std::vector<int>> new_lines;  // lines owned by each node
    std::vector<char> label;                  // 0, 'r', 'c'
};

bool build_shape_tree(const FeynmanGraph& g, const ForestShape& shape, const LabelMap& labels,
                      ShapeTree& tree) {
    const int nf = static_cast<int>(shape.proper_forks.size());
    for (const auto& f : shape.proper_forks) {
        if (f.empty() || !std::is_sorted(f.begin(), f.end())) return false;
        for (int li : f)
            if (li < 0 || li >= static_cast<int>(g.lines.size())) return false;
        if (f.size() == g.lines.size()) return false;  // the root is implicit
    }
    // laminar family check
    for (int i = 0; i < nf; ++i)
        for (int j = i + 1; j < nf; ++j) {
            const auto& a = shape.proper_forks[i];
            const auto& b = shape.proper_forks[j];
            std::vector<int> inter;
            std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                                  std::back_inserter(inter));
            if (!inter.empty() && inter.size() != a.size() && inter.size() != b.size())
                return false;  // partial overlap: not a forest
            if (inter.size() == a.size() && inter.size() == b.size()) return false;  // duplicate
        }
    std::vector<int> parent(nf + 1, -1);
    for (int i = 0; i < nf; ++i) {
        int best = 0;
        std::size_t best_size = g.lines.size() + 1;
        for (int j = 0; j < nf; ++j) {
            if (i == j) continue;
            const auto& a = shape.proper_forks[i];
            const auto& b = shape.proper_forks[j];
            if (b.size() > a.size() && std::includes(b.begin(), b.end(), a.begin(), a.end()) &&
                b.size() < best_size) {
                best = j + 1;
                best_size = b.size();
            }
        }
        parent[i + 1] = best;
    }
    tree.children.assign(nf + 1, {});
    tree.new_lines.assign(nf + 1, {});
    tree.label.assign(nf + 1, 0);
    for (int i = 1; i <= nf; ++i) tree.children[parent[i]].push_back(i);
    for (int node = 0; node <= nf; ++node) {
        std::set<int> owned;
        if (node == 0)
            for (int li = 0; li < static_cast<int>(g.lines.size()); ++li) owned.insert(li);
        else
            owned.insert(shape.proper_forks[node - 1].begin(), shape.proper_forks[node - 1].end());
        for (int c : tree.children[node])
            for (int li : shape.proper_forks[c - 1]) owned.erase(li);
        tree.new_lines[node] = {owned.begin(), owned.end()};
        if (tree.new_lines[node].empty()) return false;  // unrealizable shape
    }
    for (const auto& [idx, lab] : labels.labels) {
        if (idx < 0 || idx >= nf) return false;
        if (lab != 'r' && lab != 'c') return false;
        if (external_leg_count(g, shape.proper_forks[idx]) != 2)
            return false;  // renormalization labels attach to two-legged forks only
        tree.label[idx + 1] = lab;
    }
    return true;
}

FeynmanGraph induced_subgraph(const FeynmanGraph& g, const std::vector<int>& lines,
                              std::vector<int>& line_map_out) {
    FeynmanGraph sub;
    std::map<int, int> vmap;
    line_map_out.clear();
    for (int li : lines) {
        for (int v : {g.lines[li].u, g.lines[li].v})
            if (!vmap.count(v)) {
                int nv = static_cast<int>(vmap.size());
                vmap[v] = nv;
            }
        sub.lines.push_back({vmap[g.lines[li].u], vmap[g.lines[li].v]});
        line_map_out.push_back(li);
    }
    sub.n_vertices = static_cast<int>(vmap.size());
    std::set<int> in_fork(lines.begin(), lines.end());
    for (int leg : g.external)
        if (vmap.count(leg)) sub.external.push_back(vmap[leg]);
    for (int li = 0; li < static_cast<int>(g.lines.size()); ++li) {
        if (in_fork.count(li)) continue;
        if (vmap.count(g.lines[li].u)) sub.external.push_back(vmap[g.lines[li].u]);
        if (vmap.count(g.lines[li].v)) sub.external.push_back(vmap[g.lines[li].v]);
    }
    return sub;
}

// Does J reproduce the shape? 'c'-labeled forks are localized insertions:
// their lines are contracted out of the component structure at this level
// and checked recursively inside their own subgraph.
bool realizes_shape(const FeynmanGraph& g, const ScaleAssignment& J, const ShapeTree& tree,
                    const ForestShape& shape) {
    std::vector<int> c_outer;
    std::vector<char> inside_c(g.lines.size(), 0);
    std::vector<int> visible_nodes;
    std::vector<int> stack = {0};
    while (!stack.empty()) {
        int node = stack.back();
        stack.pop_back();
        if (node != 0 && tree.label[node] == 'c') {
            c_outer.push_back(node);
            for (int li : shape.proper_forks[node - 1]) inside_c[li] = 1;
            continue;
        }
        if (node != 0) visible_nodes.push_back(node);
        for (int c : tree.children[node]) stack.push_back(c);
    }

    // quotient: drop c-fork lines, merge their vertices
    UnionFind uf(g.n_vertices);
    for (int node : c_outer)
        for (int li : shape.proper_forks[node - 1]) uf.unite(g.lines[li].u, g.lines[li].v);
    FeynmanGraph q;
    std::map<int, int> vmap;
    std::vector<int> qline_from_g;
    for (int li = 0; li < static_cast<int>(g.lines.size()); ++li) {
        if (inside_c[li]) continue;
        int u = uf.find(g.lines[li].u), v = uf.find(g.lines[li].v);
        for (int w : {u, v})
            if (!vmap.count(w)) {
                int nv = static_cast<int>(vmap.size());
                vmap[w] = nv;
            }
        q.lines.push_back({vmap[u], vmap[v]});
        qline_from_g.push_back(li);
    }
    q.n_vertices = static_cast<int>(vmap.size());
    if (q.lines.empty()) return false;  // a two-legged root cannot be all counterterm
    if (!q.connected()) return false;

    ScaleAssignment qJ;
    for (int li : qline_from_g) qJ.push_back(J[li]);
    GNForest built = build_forest(q, qJ);

    std::set<std::vector<int>> expected;
    {
        std::vector<int> root_lines(qline_from_g.size());
        std::iota(root_lines.begin(), root_lines.end(), 0);
        expected.insert(root_lines);
    }
    std::map<int, int> g_to_q;
    for (int qi = 0; qi < static_cast<int>(qline_from_g.size()); ++qi) g_to_q[qline_from_g[qi]] = qi;
    for (int node : visible_nodes) {
        std::vector<int> qlines;
        for (int li : shape.proper_forks[node - 1])
            if (!inside_c[li]) qlines.push_back(g_to_q.at(li));
        std::sort(qlines.begin(), qlines.end());
        if (qlines.empty()) return false;
        if (qlines.size() == qline_from_g.size()) return false;  // collapsed onto the root
        expected.insert(qlines);
    }
    std::set<std::vector<int>> got;
    for (const auto& f : built.forks) got.insert(f.lines);
    if (got != expected) return false;

    for (int node : c_outer) {
        const auto& fork_lines = shape.proper_forks[node - 1];
        std::vector<int> line_map;
        FeynmanGraph sub = induced_subgraph(g, fork_lines, line_map);
        std::map<int, int> g_to_sub;
        for (int i = 0; i < static_cast<int>(line_map.size()); ++i) g_to_sub[line_map[i]] = i;
        ForestShape sub_shape;
        LabelMap sub_labels;
        std::vector<int> st = tree.children[node];
        std::vector<int> sub_nodes;
        while (!st.empty()) {
            int x = st.back();
            st.pop_back();
            sub_nodes.push_back(x);
            for (int c : tree.children[x]) st.push_back(c);
        }
        for (int x : sub_nodes) {
            std::vector<int> ls;
            for (int li : shape.proper_forks[x - 1]) ls.push_back(g_to_sub.at(li));
            std::sort(ls.begin(), ls.end());
            sub_shape.proper_forks.push_back(ls);
            if (tree.label[x])
                sub_labels.labels[static_cast<int>(sub_shape.proper_forks.size()) - 1] =
                    tree.label[x];
        }
        ScaleAssignment subJ;
        for (int li : line_map) subJ.push_back(J[li]);
        ShapeTree sub_tree;
        if (!build_shape_tree(sub, sub_shape, sub_labels, sub_tree)) return false;
        if (!realizes_shape(sub, subJ, sub_tree, sub_shape)) return false;
    }
    return true;
}

}  // namespace

EnumerationResult enumerate_labelings(const FeynmanGraph& g, int j_root, int j_floor,
                                      const ForestShape& shape, const LabelMap& labels) {
    EnumerationResult out;
    if (j_root >= 0 || j_floor > j_root) {
        out.inconsistent = true;
        return out;
    }
    ShapeTree tree;
    if (!build_shape_tree(g, shape, labels, tree)) {
        out.inconsistent = true;
        return out;
    }
    const int nf = static_cast<int>(shape.proper_forks.size());

    std::vector<int> order;
    std::vector<int> parent_of(nf + 1, 0);
    std::vector<int> st = tree.children[0];
    while (!st.empty()) {
        int x = st.back();
        st.pop_back();
        order.push_back(x);
        for (int c : tree.children[x]) {
            parent_of[c] = x;
            st.push_back(c);
        }
    }
    std::vector<int> scale_of(nf + 1, j_root);

    std::function<void(std::size_t)> rec = [&](std::size_t pos) {
        if (pos == order.size()) {
            ScaleAssignment J(g.lines.size(), 0);
            for (int node = 0; node <= nf; ++node)
                for (int li : tree.new_lines[node]) J[li] = scale_of[node];
            if (realizes_shape(g, J, tree, shape)) out.assignments.push_back(J);
            return;
        }
        int node = order[pos];
        int jp = scale_of[parent_of[node]];
        int lo, hi;
        if (tree.label[node] == 'c') {
            lo = j_floor;
            hi = std::min(jp, -1);
        } else {
            lo = std::max(jp + 1, j_floor);
            hi = -1;
        }
        for (int j = lo; j <= hi; ++j) {
            scale_of[node] = j;
            rec(pos + 1);
        }
    };
    rec(0);
    return out;
}

// ---------------------------------------------------------------------------
// Spanning trees and loops
// ---------------------------------------------------------------------------

namespace {

// line scale = scale of the innermost fork containing the line
std::vector<int> line_scales_from_forest(const FeynmanGraph& g, const GNForest& forest) {
    std::vector<int> scales(g.lines.size(), 0);
    std::vector<std::size_t> owner_size(g.lines.size(), SIZE_MAX);
    for (const auto& f : forest.forks)
        for (int li : f.lines)
            if (f.lines.size() < owner_size[li]) {
                owner_size[li] = f.lines.size();
                scales[li] = f.scale;
            }
    return scales;
}

std::vector<int> tree_path(const FeynmanGraph& g, const std::vector<int>& tree, int src, int dst,
                           const char* who) {
    if (src == dst) return {};
    std::vector<int> prev_line(g.n_vertices, -1), prev_vertex(g.n_vertices, -1);
    std::vector<char> seen(g.n_vertices, 0);
    std::vector<int> queue = {src};
    seen[src] = 1;
    for (std::size_t h = 0; h < queue.size(); ++h) {
        int v = queue[h];
        for (int li : tree) {
            int other = -1;
            if (g.lines[li].u == v) other = g.lines[li].v;
            else if (g.lines[li].v == v) other = g.lines[li].u;
            if (other < 0 || seen[other]) continue;
            seen[other] = 1;
            prev_line[other] = li;
            prev_vertex[other] = v;
            queue.push_back(other);
        }
    }
    if (!seen[dst]) throw std::invalid_argument(std::string(who) + ": tree path missing");
    std::vector<int> path;
    for (int v = dst; v != src; v = prev_vertex[v]) path.push_back(prev_line[v]);
    std::sort(path.begin(), path.end());
    return path;
}

}  // namespace

std::vector<int> choose_spanning_tree(const FeynmanGraph& g, const GNForest& forest) {
    if (forest.forks.empty() || forest.forks[0].lines.size() != g.lines.size())
        throw std::invalid_argument("choose_spanning_tree: forest does not match graph");
    std::vector<int> scales = line_scales_from_forest(g, forest);
    std::vector<int> order(g.lines.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scales[a] != scales[b]) return scales[a] > scales[b];
        return a < b;
    });
    UnionFind uf(g.n_vertices);
    std::vector<int> tree;
    for (int li : order)
        if (uf.unite(g.lines[li].u, g.lines[li].v)) tree.push_back(li);
    std::sort(tree.begin(), tree.end());

    // posterior check of the restriction property
    std::set<int> in_tree(tree.begin(), tree.end());
    for (const auto& f : forest.forks) {
        auto vs = fork_vertices(g, f.lines);
        std::map<int, int> vidx;
        for (int v : vs) {
            int nv = static_cast<int>(vidx.size());
            vidx[v] = nv;
        }
        UnionFind sub(static_cast<int>(vs.size()));
        int tree_lines = 0;
        for (int li : f.lines) {
            if (!in_tree.count(li)) continue;
            ++tree_lines;
            sub.unite(vidx[g.lines[li].u], vidx[g.lines[li].v]);
        }
        int comps = 0;
        for (std::size_t v = 0; v < vs.size(); ++v)
            if (sub.find(static_cast<int>(v)) == static_cast<int>(v)) ++comps;
        if (comps != 1 || tree_lines != static_cast<int>(vs.size()) - 1)
            throw std::logic_error("choose_spanning_tree: restriction property violated");
    }
    return tree;
}

std::vector<int> loop_of_line(const FeynmanGraph& g, const std::vector<int>& tree, int line) {
    std::set<int> in_tree(tree.begin(), tree.end());
    if (in_tree.count(line)) throw std::invalid_argument("loop_of_line: line is in the tree");
    std::vector<int> loop = tree_path(g, tree, g.lines[line].u, g.lines[line].v, "loop_of_line");
    loop.push_back(line);
    std::sort(loop.begin(), loop.end());
    return loop;
}

std::vector<int> external_path(const FeynmanGraph& g, const std::vector<int>& tree) {
    if (g.external.size() != 2)
        throw std::invalid_argument("external_path: defined for two-legged graphs");
    return tree_path(g, tree, g.external[0], g.external[1], "external_path");
}

std::optional<OverlappingTriple> find_overlapping_triple(const FeynmanGraph& g,
                                                         const std::vector<int>& tree,
                                                         const ScaleAssignment* scales) {
    std::set<int> in_tree(tree.begin(), tree.end());
    std::vector<int> nontree;
    for (int li = 0; li < static_cast<int>(g.lines.size()); ++li)
        if (!in_tree.count(li)) nontree.push_back(li);
    std::vector<std::set<int>> loops;
    for (int li : nontree) {
        auto lp = loop_of_line(g, tree, li);
        loops.emplace_back(lp.begin(), lp.end());
    }
    std::vector<int> tree_order(tree.begin(), tree.end());
    if (scales) {
        std::sort(tree_order.begin(), tree_order.end(), [&](int a, int b) {
            if ((*scales)[a] != (*scales)[b]) return (*scales)[a] > (*scales)[b];
            return a < b;
        });
    }
    for (int tl : tree_order) {
        std::vector<int> hits;
        for (std::size_t i = 0; i < nontree.size(); ++i)
            if (loops[i].count(tl)) hits.push_back(nontree[i]);
        if (hits.size() >= 2) return OverlappingTriple{tl, hits[0], hits[1]};
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Ladder classification
// ---------------------------------------------------------------------------

namespace {

// smallest connected proper line subset with exactly two external legs
std::vector<int> find_two_legged_subdiagram(const FeynmanGraph& g) {
    const int L = static_cast<int>(g.lines.size());
    if (L > 24) throw std::invalid_argument("classify_four_legged: graph too large");
    std::vector<int> best;
    for (std::uint32_t mask = 1; mask + 1 < (1u << L); ++mask) {
        int pc = __builtin_popcount(mask);
        if (!best.empty() && pc >= static_cast<int>(best.size())) continue;
        std::vector<int> lines;
        for (int li = 0; li < L; ++li)
            if (mask & (1u << li)) lines.push_back(li);
        std::map<int, int> vidx;
        for (int li : lines)
            for (int v : {g.lines[li].u, g.lines[li].v})
                if (!vidx.count(v)) {
                    int nv = static_cast<int>(vidx.size());
                    vidx[v] = nv;
                }
        UnionFind uf(static_cast<int>(vidx.size()));
        for (int li : lines) uf.unite(vidx[g.lines[li].u], vidx[g.lines[li].v]);
        int root = uf.find(0);
        bool conn = true;
        for (int v = 1; v < static_cast<int>(vidx.size()); ++v)
            if (uf.find(v) != root) conn = false;
        if (!conn) continue;
        if (external_leg_count(g, lines) == 2) best = lines;
    }
    return best;
}

// contract a connected line subset into one generalized vertex, then smooth
// away all degree-2 vertices (strings become bare lines)
FeynmanGraph contract_and_smooth(const FeynmanGraph& g, const std::vector<int>& subset) {
    FeynmanGraph h = g;
    if (!subset.empty()) {
        std::set<int> vs;
        for (int li : subset) {
            vs.insert(g.lines[li].u);
            vs.insert(g.lines[li].v);
        }
        int rep = *vs.begin();
        std::set<int> drop(subset.begin(), subset.end());
        FeynmanGraph out;
        out.n_vertices = g.n_vertices;
        for (int li = 0; li < static_cast<int>(g.lines.size()); ++li) {
            if (drop.count(li)) continue;
            int u = vs.count(g.lines[li].u) ? rep : g.lines[li].u;
            int v = vs.count(g.lines[li].v) ? rep : g.lines[li].v;
            out.lines.push_back({u, v});
        }
        for (int leg : g.external) out.external.push_back(vs.count(leg) ? rep : leg);
        h = out;
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (int v = 0; v < h.n_vertices && !changed; ++v) {
            std::vector<int> touching;
            int ext_count = 0;
            for (int li = 0; li < static_cast<int>(h.lines.size()); ++li) {
                if (h.lines[li].u == v) touching.push_back(li);
                if (h.lines[li].v == v) touching.push_back(li);
            }
            for (int leg : h.external)
                if (leg == v) ++ext_count;
            int deg = static_cast<int>(touching.size()) + ext_count;
            if (deg != 2) continue;
            if (touching.size() == 2 && touching[0] == touching[1])
                throw std::logic_error("contract_and_smooth: free circle");
            FeynmanGraph out;
            out.n_vertices = h.n_vertices;
            if (touching.size() == 2) {
                int a = h.lines[touching[0]].u == v ? h.lines[touching[0]].v : h.lines[touching[0]].u;
                int b = h.lines[touching[1]].u == v ? h.lines[touching[1]].v : h.lines[touching[1]].u;
                for (int li = 0; li < static_cast<int>(h.lines.size()); ++li)
                    if (li != touching[0] && li != touching[1]) out.lines.push_back(h.lines[li]);
                out.lines.push_back({a, b});
                out.external = h.external;
            } else if (touching.size() == 1) {
                int a = h.lines[touching[0]].u == v ? h.lines[touching[0]].v : h.lines[touching[0]].u;
                for (int li = 0; li < static_cast<int>(h.lines.size()); ++li)
                    if (li != touching[0]) out.lines.push_back(h.lines[li]);
                bool moved = false;
                for (int leg : h.external) {
                    if (leg == v && !moved) {
                        out.external.push_back(a);
                        moved = true;
                    } else {
                        out.external.push_back(leg);
                    }
                }
            } else {
                continue;  // bare vertex carrying two external legs
            }
            h = out;
            changed = true;
        }
    }
    std::map<int, int> vmap;
    auto touch = [&](int v) {
        if (!vmap.count(v)) {
            int nv = static_cast<int>(vmap.size());
            vmap[v] = nv;
        }
    };
    for (const auto& ln : h.lines) {
        touch(ln.u);
        touch(ln.v);
    }
    for (int leg : h.external) touch(leg);
    FeynmanGraph out;
    out.n_vertices = static_cast<int>(vmap.size());
    for (const auto& ln : h.lines) out.lines.push_back({vmap[ln.u], vmap[ln.v]});
    for (int leg : h.external) out.external.push_back(vmap[leg]);
    return out;
}

bool is_bubble_chain(const FeynmanGraph& g) {
    if (g.external.size() != 4) return false;
    if (g.lines.empty()) return g.n_vertices == 1;
    std::vector<int> int_deg(g.n_vertices, 0), ext_deg(g.n_vertices, 0);
    std::map<std::pair<int, int>, int> mult;
    for (const auto& ln : g.lines) {
        if (ln.u == ln.v) return false;
        ++int_deg[ln.u];
        ++int_deg[ln.v];
        auto key = std::minmax(ln.u, ln.v);
        ++mult[{key.first, key.second}];
    }
    for (int leg : g.external) ++ext_deg[leg];
    std::vector<int> ends;
    for (int v = 0; v < g.n_vertices; ++v) {
        if (int_deg[v] == 2 && ext_deg[v] == 2) ends.push_back(v);
        else if (int_deg[v] == 4 && ext_deg[v] == 0) continue;
        else return false;
    }
    if (ends.size() != 2) return false;
    for (const auto& [key, m] : mult)
        if (m != 2) return false;
    int prev = -1, cur = ends[0], steps = 0;
    while (true) {
        int next = -1;
        for (const auto& [key, m] : mult) {
            int other = -1;
            if (key.first == cur) other = key.second;
            else if (key.second == cur) other = key.first;
            if (other < 0 || other == prev) continue;
            if (next >= 0) return false;  // branching
            next = other;
        }
        if (next < 0) break;
        prev = cur;
        cur = next;
        if (++steps > g.n_vertices) return false;
    }
    return cur == ends[1] && steps == g.n_vertices - 1;
}

}  // namespace

FourPointClass classify_four_legged(const FeynmanGraph& g) {
    if (g.external.size() != 4)
        throw std::invalid_argument("classify_four_legged: graph must have 4 external legs");
    if (!g.connected())
        throw std::invalid_argument("classify_four_legged: graph must be connected");
    FeynmanGraph h = contract_and_smooth(g, {});
    for (int round = 0; round < 64; ++round) {
        auto sub = find_two_legged_subdiagram(h);
        if (sub.empty()) break;
        h = contract_and_smooth(h, sub);
    }
    return is_bubble_chain(h) ? FourPointClass::ladder : FourPointClass::overlapping;
}

// ---------------------------------------------------------------------------
// Power counting
// ---------------------------------------------------------------------------

PowerCountingReport power_count_bound(const FeynmanGraph& g, const GNForest& forest, double M,
                                      int s0, int s) {
    (void)M;
    if (forest.forks.empty() || forest.forks[0].lines.size() != g.lines.size())
        throw std::invalid_argument("power_count_bound: forest does not match graph");
    for (const auto& f : forest.forks)
        for (int li : f.lines)
            if (li < 0 || li >= static_cast<int>(g.lines.size()))
                throw std::invalid_argument("power_count_bound: fork line out of range");

    PowerCountingReport rep;
    const Fork& root = forest.forks[0];
    const int E_root = root.external_legs;
    if (E_root == 2) rep.classification = GraphClass::two_legged;
    else if (E_root == 4)
        rep.classification = classify_four_legged(g) == FourPointClass::ladder
                                 ? GraphClass::ladder
                                 : GraphClass::overlapping_four_legged;
    else rep.classification = GraphClass::higher;

    rep.root_exponent = 0.5 * root.scale * (4 - E_root);
    rep.m_power = 0.5 * (4 - E_root) - s0 - s;

    // minimal two-legged proper forks: no two-legged strict ancestor besides
    // the root; everything above them is pruned into a generalized vertex
    std::vector<int> minimal;
    for (std::size_t i = 1; i < forest.forks.size(); ++i) {
        if (forest.forks[i].external_legs != 2) continue;
        bool has_2l_ancestor = false;
        for (std::size_t a = 1; a < forest.forks.size(); ++a) {
            if (a == i || forest.forks[a].external_legs != 2) continue;
            const auto& sup = forest.forks[a].lines;
            const auto& fl = forest.forks[i].lines;
            if (sup.size() > fl.size() &&
                std::includes(sup.begin(), sup.end(), fl.begin(), fl.end()))
                has_2l_ancestor = true;
        }
        if (!has_2l_ancestor) minimal.push_back(static_cast<int>(i));
    }
    rep.n_insertions = static_cast<int>(minimal.size());

    UnionFind uf(g.n_vertices);
    std::vector<char> dropped(g.lines.size(), 0);
    int insertion_weight = 0;
    for (int fi : minimal) {
        const auto& f = forest.forks[fi];
        insertion_weight += 3 * f.n_vertices - 1;
        for (int li : f.lines) {
            dropped[li] = 1;
            uf.unite(g.lines[li].u, g.lines[li].v);
        }
    }
    int L_quot = 0;
    std::set<int> classes;
    for (int li = 0; li < static_cast<int>(g.lines.size()); ++li)
        if (!dropped[li]) {
            ++L_quot;
            classes.insert(uf.find(g.lines[li].u));
            classes.insert(uf.find(g.lines[li].v));
        }
    for (int leg : g.external) classes.insert(uf.find(leg));
    int V_quot = static_cast<int>(classes.size());
    int T_quot = V_quot - 1;
    // loop-volume factors (L - T) plus the scale-sum budget (L - 1) plus the
    // pruned insertions; equals 3n - 2 for two-legged graphs
    rep.abs_j_power = (L_quot - T_quot) + (L_quot - 1) + insertion_weight;

    std::vector<int> child_count(forest.forks.size(), 0);
    for (std::size_t i = 1; i < forest.forks.size(); ++i) {
        const Fork& f = forest.forks[i];
        if (f.parent >= 0) ++child_count[f.parent];
        ForkLedgerRow row;
        row.lines = f.lines;
        row.external_legs = f.external_legs;
        row.scale = f.scale;
        row.parent_scale = f.parent >= 0 ? forest.forks[f.parent].scale : root.scale;
        row.exponent = 0.5 * (f.scale - row.parent_scale) * (4 - f.external_legs);
        if (f.external_legs == 4) row.scale_sum = "|j|";
        else if (f.external_legs > 4) row.scale_sum = "1/(M-1)";
        else row.scale_sum = "insertion";
        rep.forks.push_back(std::move(row));
    }
    double sym = 1.0;
    for (std::size_t i = 0; i < forest.forks.size(); ++i)
        for (int b = 2; b <= child_count[i]; ++b) sym /= b;
    rep.symmetry_factor = sym;
    return rep;
}

PowerCountingReport derivative_bound_report(const FeynmanGraph& g, const GNForest& forest,
                                            double M, int s0, int s1, double eps) {
    if (s0 < 0 || s0 > 2 || s1 < 0 || s1 > 2)
        throw std::invalid_argument("derivative_bound_report: s0, s1 must be in {0,1,2}");
    if (!(eps > 0.0 && eps < 1.0))
        throw std::invalid_argument("derivative_bound_report: eps must be in (0,1)");
    PowerCountingReport rep = power_count_bound(g, forest, M, 0, 0);
    if (rep.classification != GraphClass::two_legged)
        throw std::invalid_argument("derivative_bound_report: graph must be two-legged");
    if (s0 + s1 == 0) return rep;

    rep.m_power = (1.0 - s0 - s1) + eps;
    auto tree = choose_spanning_tree(g, forest);
    std::vector<int> scales(g.lines.size(), 0);
    std::vector<std::size_t> owner(g.lines.size(), SIZE_MAX);
    for (const auto& f : forest.forks)
        for (int li : f.lines)
            if (f.lines.size() < owner[li]) {
                owner[li] = f.lines.size();
                scales[li] = f.scale;
            }
    auto triple = find_overlapping_triple(g, tree, &scales);
    if (!triple)
        throw std::runtime_error(
            "derivative_bound_report: no overlapping triple; not a two-legged 1PI graph");
    rep.discount_line = triple->tree_line;
    return rep;
}

std::string format_report(const PowerCountingReport& rep) {
    std::ostringstream out;
    const char* cls = "";
    switch (rep.classification) {
        case GraphClass::two_legged: cls = "two-legged"; break;
        case GraphClass::ladder: cls = "ladder"; break;
        case GraphClass::overlapping_four_legged: cls = "overlapping-four-legged"; break;
        case GraphClass::higher: cls = "higher"; break;
    }
    out << "classification: " << cls << '\n';
    out << "root exponent: " << rep.root_exponent << '\n';
    for (const auto& row : rep.forks) {
        out << "fork {";
        for (std::size_t i = 0; i < row.lines.size(); ++i)
            out << (i ? "," : "") << row.lines[i];
        out << "} E=" << row.external_legs << " j=" << row.scale
            << " exponent=" << row.exponent << " scale-sum=" << row.scale_sum << '\n';
    }
    out << "M-power: " << rep.m_power << "*j\n";
    out << "|j|-power: " << rep.abs_j_power << '\n';
    if (rep.discount_line >= 0) out << "discount line: " << rep.discount_line << '\n';
    return out.str();
}

}  // namespace fermivol
