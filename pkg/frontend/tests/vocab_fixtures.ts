import type { VocabPayload } from "../src/types.js";

/** Captured from the running service's vocabulary endpoint, one payload per
 * vocabulary mode. */
export const COMBINED_VOCAB: VocabPayload = {
  "id": "64c27d54ef0a",
  "mode": "combined",
  "entries": [
    {
      "id": 0,
      "text": "move arm right with gripper open",
      "directions": [
        [
          "x",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 1,
      "text": "move arm right with gripper closed",
      "directions": [
        [
          "x",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 2,
      "text": "move arm left with gripper open",
      "directions": [
        [
          "x",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 3,
      "text": "move arm left with gripper closed",
      "directions": [
        [
          "x",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 4,
      "text": "move arm forward with gripper open",
      "directions": [
        [
          "y",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 5,
      "text": "move arm forward with gripper closed",
      "directions": [
        [
          "y",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 6,
      "text": "move arm backward with gripper open",
      "directions": [
        [
          "y",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 7,
      "text": "move arm backward with gripper closed",
      "directions": [
        [
          "y",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 8,
      "text": "move arm upward with gripper open",
      "directions": [
        [
          "z",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 9,
      "text": "move arm upward with gripper closed",
      "directions": [
        [
          "z",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 10,
      "text": "move arm downward with gripper open",
      "directions": [
        [
          "z",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 11,
      "text": "move arm downward with gripper closed",
      "directions": [
        [
          "z",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 12,
      "text": "move arm right and forward with gripper open",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "y",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 13,
      "text": "move arm right and forward with gripper closed",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "y",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 14,
      "text": "move arm right and backward with gripper open",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "y",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 15,
      "text": "move arm right and backward with gripper closed",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "y",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 16,
      "text": "move arm right and upward with gripper open",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 17,
      "text": "move arm right and upward with gripper closed",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 18,
      "text": "move arm right and downward with gripper open",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 19,
      "text": "move arm right and downward with gripper closed",
      "directions": [
        [
          "x",
          "+"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 20,
      "text": "move arm left and forward with gripper open",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "y",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 21,
      "text": "move arm left and forward with gripper closed",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "y",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 22,
      "text": "move arm left and backward with gripper open",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "y",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 23,
      "text": "move arm left and backward with gripper closed",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "y",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 24,
      "text": "move arm left and upward with gripper open",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 25,
      "text": "move arm left and upward with gripper closed",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 26,
      "text": "move arm left and downward with gripper open",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 27,
      "text": "move arm left and downward with gripper closed",
      "directions": [
        [
          "x",
          "-"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 28,
      "text": "move arm forward and upward with gripper open",
      "directions": [
        [
          "y",
          "+"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 29,
      "text": "move arm forward and upward with gripper closed",
      "directions": [
        [
          "y",
          "+"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 30,
      "text": "move arm forward and downward with gripper open",
      "directions": [
        [
          "y",
          "+"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 31,
      "text": "move arm forward and downward with gripper closed",
      "directions": [
        [
          "y",
          "+"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 32,
      "text": "move arm backward and upward with gripper open",
      "directions": [
        [
          "y",
          "-"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 33,
      "text": "move arm backward and upward with gripper closed",
      "directions": [
        [
          "y",
          "-"
        ],
        [
          "z",
          "+"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 34,
      "text": "move arm backward and downward with gripper open",
      "directions": [
        [
          "y",
          "-"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "open"
    },
    {
      "id": 35,
      "text": "move arm backward and downward with gripper closed",
      "directions": [
        [
          "y",
          "-"
        ],
        [
          "z",
          "-"
        ]
      ],
      "gripper": "closed"
    },
    {
      "id": 36,
      "text": "make slight adjustments to gripper position",
      "directions": [],
      "gripper": null
    }
  ]
};

export const FLAT_VOCAB: VocabPayload = {
  "id": "1e8ed5dedaec",
  "mode": "flat",
  "entries": [
    {
      "id": 0,
      "text": "move arm upward",
      "directions": [
        [
          "z",
          "+"
        ]
      ],
      "gripper": null
    },
    {
      "id": 1,
      "text": "move arm downward",
      "directions": [
        [
          "z",
          "-"
        ]
      ],
      "gripper": null
    },
    {
      "id": 2,
      "text": "move arm right",
      "directions": [
        [
          "x",
          "+"
        ]
      ],
      "gripper": null
    },
    {
      "id": 3,
      "text": "move arm left",
      "directions": [
        [
          "x",
          "-"
        ]
      ],
      "gripper": null
    },
    {
      "id": 4,
      "text": "move arm forward",
      "directions": [
        [
          "y",
          "+"
        ]
      ],
      "gripper": null
    },
    {
      "id": 5,
      "text": "move arm backward",
      "directions": [
        [
          "y",
          "-"
        ]
      ],
      "gripper": null
    },
    {
      "id": 6,
      "text": "open the gripper",
      "directions": [],
      "gripper": "open"
    },
    {
      "id": 7,
      "text": "close the gripper",
      "directions": [],
      "gripper": "closed"
    }
  ]
};
