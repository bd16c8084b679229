// Golden service payloads captured from the labeling API.

import { Progress, QueryPayload } from "../src/types.js";

export const goldenProgress: Progress = {
  session_id: "abc123",
  status: "active",
  budget: 20,
  queries_made: 6,
  anomalies_seen: 4,
  curve: [1, 2, 2, 3, 4, 4],
};

export const goldenQuery: QueryPayload = {
  session_id: "abc123",
  status: "active",
  instance_id: 17,
  features: [4.436513, 2.238837],
  feature_names: ["x0", "x1"],
  score: 0.412345,
  rules: {
    disjuncts: [
      [
        { f: 0, op: ">", thr: 4.436513 },
        { f: 1, op: ">", thr: 2.238837 },
        { f: 1, op: "<=", thr: 4.395921 },
      ],
      [
        { f: 0, op: ">", thr: 3.658627 },
        { f: 1, op: "<=", thr: 2.716822 },
      ],
      [{ f: 0, op: ">", thr: -0.431709 }],
    ],
  },
  rules_text:
    "((x0 > 4.436513) & (x1 > 2.238837) & (x1 <= 4.395921)) or ((x0 > 3.658627) & (x1 <= 2.716822)) or (x0 > -0.431709)",
  batch: [17],
  batch_details: [
    { instance_id: 17, features: [4.436513, 2.238837], score: 0.412345, rules_text: "(x0 > 4.436513)" },
  ],
  progress: goldenProgress,
};

export const goldenCompleted: QueryPayload = {
  session_id: "abc123",
  status: "completed",
  progress: {
    session_id: "abc123",
    status: "completed",
    budget: 20,
    queries_made: 20,
    anomalies_seen: 11,
    curve: [1, 1, 2, 3, 3, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11],
  },
};

export const goldenEmptyRules: QueryPayload = {
  ...goldenQuery,
  rules: { disjuncts: [] },
  rules_text: "false",
  batch_details: [],
};

export const goldenDiverseBatch: QueryPayload = {
  ...goldenQuery,
  batch: [17, 31, 99],
  batch_details: [
    { instance_id: 17, features: [4.4, 2.2], score: 0.41, rules_text: "(x0 > 4.400000)" },
    { instance_id: 31, features: [1.0, -3.2], score: 0.37, rules_text: "(x1 <= -3.000000)" },
    { instance_id: 99, features: [-2.0, 5.0], score: 0.33, rules_text: "(x1 > 4.900000)" },
  ],
};
