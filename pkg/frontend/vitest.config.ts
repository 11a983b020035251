// Kept free of imports so the config loads even when vitest is
// installed globally rather than into node_modules.
export default {
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the end-to-end smoke boots a real service process
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
};
