#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace treeattn {

// Rooted dependency parse over token indices. Node i corresponds to token i;
// children keep token order, but no semantics attach to it (child-sum
// composers are order-insensitive).
struct TreeNode {
    int token = -1;
    std::vector<int> children;
};

struct DependencyTree {
    std::vector<TreeNode> nodes;
    int root = -1;

    int size() const { return static_cast<int>(nodes.size()); }

    // connected, acyclic, single root, every token in exactly one node
    void validate() const {
        const int n = size();
        if (n == 0) throw std::invalid_argument("tree: empty");
        if (root < 0 || root >= n) throw std::invalid_argument("tree: root index out of range");
        std::vector<int> parent_count(n, 0);
        for (int i = 0; i < n; ++i) {
            if (nodes[i].token != i) throw std::invalid_argument("tree: node/token index mismatch");
            for (int c : nodes[i].children) {
                if (c < 0 || c >= n) throw std::invalid_argument("tree: child index out of range");
                parent_count[c]++;
            }
        }
        if (parent_count[root] != 0) throw std::invalid_argument("tree: root appears as a child");
        for (int i = 0; i < n; ++i)
            if (i != root && parent_count[i] != 1)
                throw std::invalid_argument("tree: token " + std::to_string(i) +
                                            " has " + std::to_string(parent_count[i]) + " heads");
        if (static_cast<int>(postorder().size()) != n)
            throw std::invalid_argument("tree: not connected");
    }

    // children before parents; iterative to keep stack depth flat
    std::vector<int> postorder() const {
        const size_t n = nodes.size();
        std::vector<int> order;
        order.reserve(n);
        std::vector<std::pair<int, size_t>> stack;
        stack.emplace_back(root, 0);
        size_t pushes = 1;
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < nodes[node].children.size()) {
                int c = nodes[node].children[next_child++];
                if (++pushes > n) throw std::invalid_argument("tree: cycle detected");
                stack.emplace_back(c, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        return order;
    }
};

inline bool operator==(const DependencyTree& a, const DependencyTree& b) {
    if (a.root != b.root || a.nodes.size() != b.nodes.size()) return false;
    for (size_t i = 0; i < a.nodes.size(); ++i)
        if (a.nodes[i].token != b.nodes[i].token || a.nodes[i].children != b.nodes[i].children) return false;
    return true;
}

}  // namespace treeattn
