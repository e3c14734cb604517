#!/usr/bin/env python3
"""Writes the synthetic household dataset (examples.jsonl, validation.jsonl,
test.jsonl) and standalone scene files under scenes/ next to this script.

Scenes come in two naming styles so that the same task can refer to a "tv"
in one home and a "television" in another. Plans are written with object
keys and resolved to script lines with the scene's node ids.

Run: python3 fixtures/generate.py
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent

STYLE_A = {
    "tv": "tv", "sofa": "sofa", "glass": "glass", "lamp": "lamp", "rag": "rag",
    "book": "book", "computer": "computer",
}
STYLE_B = {
    "tv": "television", "sofa": "couch", "glass": "mug", "lamp": "light", "rag": "mop",
    "book": "novel", "computer": "computer",
}

ROOM_X = {"living_room": 0.0, "kitchen": 12.0, "dining_room": 24.0, "bathroom": 36.0,
          "bedroom": 48.0, "home_office": 60.0}


class Scene:
    def __init__(self, style=STYLE_A):
        self.style = style
        self.nodes = []
        self.edges = []
        self.keys = {}
        self.pos = {}
        self.next_id = 1

    def _node(self, key, category, props=(), states=(), position=None):
        node = {"id": self.next_id, "category": category,
                "states": sorted(states), "properties": sorted(props)}
        if position is not None:
            node["position"] = [round(v, 3) for v in position]
            self.pos[self.next_id] = position
        self.nodes.append(node)
        self.keys[key] = self.next_id
        self.next_id += 1
        return self.keys[key]

    def name(self, key):
        return self.style.get(key, key)

    def room(self, category):
        return self._node(category, category, ["room"], (), (ROOM_X[category], 0.0, 0.0))

    def agent(self, room):
        aid = self._node("character", "character")
        self.edges.append({"from_id": aid, "relation": "INSIDE", "to_id": self.keys[room]})
        return aid

    def furniture(self, key, room, props=(), states=(), dx=0.0, dy=0.0):
        rx = ROOM_X[room]
        fid = self._node(key, self.name(key), props, states, (rx + dx, dy, 0.0))
        self.edges.append({"from_id": fid, "relation": "INSIDE", "to_id": self.keys[room]})
        return fid

    def item(self, key, parent, props=(), states=(), relation="ON", dx=0.0, dy=0.0, category=None):
        px, py, pz = self.pos[self.keys[parent]]
        cat = category or self.name(key.split("#")[0])
        iid = self._node(key, cat, props, states, (px + dx, py + dy, pz + 0.8))
        self.edges.append({"from_id": iid, "relation": relation, "to_id": self.keys[parent]})
        return iid

    def line(self, verb, *keys):
        parts = [f"[{verb}]"]
        for key in keys:
            node = self.nodes[self.keys[key] - 1]
            parts.append(f"<{node['category']}> ({node['id']})")
        return " ".join(parts)

    def plan(self, steps):
        return [self.line(verb, *keys) for verb, *keys in steps]

    def graph(self):
        return {"nodes": self.nodes, "edges": self.edges}


# ---------------------------------------------------------------- scenes

def living_room(style=STYLE_A, tv_state="off", cleaner=None, reading=None, extras=True):
    s = Scene(style)
    s.room("living_room")
    s.room("kitchen")
    s.agent("kitchen")
    s.furniture("tv", "living_room", ["has_switch"], [tv_state], dx=4.0, dy=1.0)
    s.furniture("sofa", "living_room", ["sittable"], dx=1.0, dy=3.0)
    s.furniture("coffee_table", "living_room", ["surface"], ["dirty"], dx=2.0, dy=2.0)
    s.furniture("tv_stand", "living_room", ["surface"], ["dirty"], dx=4.0, dy=0.5)
    s.furniture("lamp", "living_room", ["has_switch"], ["off"], dx=0.5, dy=4.0)
    s.furniture("bookshelf", "living_room", ["surface"], dx=5.0, dy=4.0)
    s.furniture("cabinet", "living_room", ["surface"], dx=6.0, dy=0.0)
    if extras:
        s.item("remote_control", "coffee_table", ["grabbable"])
    if cleaner:
        s.item(cleaner, "cabinet", ["grabbable"], category=cleaner)
    if reading:
        s.item(reading, "bookshelf", ["grabbable"], category=reading)
    s.furniture("kitchen_counter", "kitchen", ["surface"], dx=1.0)
    s.furniture("fridge", "kitchen", ["openable", "container"], ["closed"], dx=3.0)
    return s


def office(style=STYLE_A):
    s = Scene(style)
    s.room("home_office")
    s.room("living_room")
    s.agent("living_room")
    s.furniture("desk", "home_office", ["surface"], dx=2.0, dy=1.0)
    s.furniture("chair", "home_office", ["sittable"], dx=2.0, dy=2.0)
    s.item("computer", "desk", ["has_switch"], ["off"])
    s.item("keyboard", "desk", ["grabbable"], dy=0.3)
    s.item("mouse", "desk", ["grabbable"], dx=0.3)
    s.furniture("sofa", "living_room", ["sittable"], dx=1.0)
    return s


def dining(n_plates=3, n_cups=3, spread=0.35, counter_dx=1.0):
    s = Scene(STYLE_A)
    s.room("kitchen")
    s.room("dining_room")
    s.agent("kitchen")
    s.furniture("kitchen_counter", "kitchen", ["surface"], dx=counter_dx)
    s.furniture("sink", "kitchen", ["surface"], dx=counter_dx + 2.0)
    s.furniture("table", "dining_room", ["surface"], dx=2.0, dy=2.0)
    s.furniture("chair", "dining_room", ["sittable"], dx=2.0, dy=3.0)
    for i in range(n_plates):
        s.item(f"plate#{i}", "kitchen_counter", ["grabbable"], dx=spread * i, category="plate")
    for i in range(n_cups):
        s.item(f"cup#{i}", "kitchen_counter", ["grabbable", "drinkable"], dx=spread * i, dy=0.4, category="cup")
    return s


def kitchen(style=STYLE_A, food="milk"):
    s = Scene(style)
    s.room("kitchen")
    s.room("living_room")
    s.agent("living_room")
    s.furniture("kitchen_counter", "kitchen", ["surface"], dx=1.0)
    s.furniture("sink", "kitchen", ["surface"], dx=3.0)
    s.furniture("fridge", "kitchen", ["openable", "container"], ["closed"], dx=5.0)
    s.item("faucet", "sink", ["has_switch"], ["off"])
    s.item("glass", "kitchen_counter", ["grabbable", "drinkable"], category=s.name("glass"))
    s.item(food, "kitchen_counter", ["grabbable"], dx=0.5, category=food)
    s.item("plate", "kitchen_counter", ["grabbable"], dx=-0.5)
    return s


def laundry():
    s = Scene(STYLE_A)
    s.room("bathroom")
    s.room("bedroom")
    s.agent("bedroom")
    s.furniture("basket", "bathroom", ["container"], ["open"], dx=1.0)
    s.furniture("washing_machine", "bathroom", ["openable", "container", "has_switch"], ["closed", "off"], dx=3.0)
    s.item("clothes", "basket", ["grabbable"], relation="INSIDE")
    s.furniture("bed", "bedroom", ["sittable"], dx=2.0)
    return s


def bedroom():
    s = Scene(STYLE_A)
    s.room("bedroom")
    s.room("living_room")
    s.agent("living_room")
    s.furniture("bed", "bedroom", ["sittable"], dx=2.0)
    s.furniture("nightstand", "bedroom", ["surface"], dx=3.0)
    s.item("pillow", "bed", ["grabbable"])
    s.furniture("lamp", "bedroom", ["has_switch"], ["off"], dx=3.0, dy=0.5)
    return s


# ---------------------------------------------------------------- plans

def watch(s):
    return s.plan([("Walk", "living_room"), ("Walk", "tv"), ("SwitchOn", "tv"),
                   ("Walk", "sofa"), ("Sit", "sofa"), ("LookAt", "tv")])


def computer(s):
    return s.plan([("Walk", "home_office"), ("Walk", "desk"), ("SwitchOn", "computer"),
                   ("TypeOn", "keyboard"), ("LookAt", "computer")])


def set_table(s, rounds=3):
    steps = []
    for i in range(rounds):
        steps += [("Walk", "kitchen_counter"), ("Grab", f"plate#{i}"), ("Grab", f"cup#{i}"),
                  ("Walk", "table"), ("PutBack", f"plate#{i}", "table"), ("PutBack", f"cup#{i}", "table")]
    return s.plan(steps)


def clean(s, tool):
    return s.plan([("Walk", "cabinet"), ("Grab", tool), ("Walk", "coffee_table"), ("Wipe", "coffee_table"),
                   ("Walk", "tv_stand"), ("Wipe", "tv_stand"), ("Walk", "cabinet"), ("PutBack", tool, "cabinet")])


def wash_clothes(s):
    return s.plan([("Walk", "bathroom"), ("Walk", "basket"), ("Grab", "clothes"), ("Walk", "washing_machine"),
                   ("Open", "washing_machine"), ("PutIn", "clothes", "washing_machine"),
                   ("Close", "washing_machine"), ("SwitchOn", "washing_machine")])


def drink(s):
    return s.plan([("Walk", "kitchen"), ("Walk", "kitchen_counter"), ("Grab", "glass"), ("Walk", "sink"),
                   ("SwitchOn", "faucet"), ("SwitchOff", "faucet"), ("Drink", "glass")])


def read(s, item):
    return s.plan([("Walk", "living_room"), ("Walk", "bookshelf"), ("Grab", item), ("Walk", "sofa"),
                   ("Sit", "sofa"), ("LookAt", item)])


def nap(s):
    return s.plan([("Walk", "bedroom"), ("Walk", "bed"), ("Sit", "bed")])


def lamp_on(s):
    return s.plan([("Walk", "living_room"), ("Walk", "lamp"), ("SwitchOn", "lamp")])


def store_food(s, food):
    return s.plan([("Walk", "kitchen"), ("Walk", "kitchen_counter"), ("Grab", food), ("Walk", "fridge"),
                   ("Open", "fridge"), ("PutIn", food, "fridge"), ("Close", "fridge")])


def sit_down(s):
    return s.plan([("Walk", "living_room"), ("Walk", "sofa"), ("Sit", "sofa")])


def record(task, s, plan, description=None):
    rec = {"task": task}
    if description:
        rec["description"] = description
    rec["plan"] = plan
    rec["env_before"] = s.graph()
    return rec


def examples():
    out = []
    s = living_room(); out.append(record("watch tv", s, watch(s), "Turn on the TV and sit down to watch it."))
    s = office(); out.append(record("use the computer", s, computer(s)))
    s = dining(counter_dx=0.5); out.append(record("set the dinner table", s, set_table(s)))
    s = living_room(cleaner="mop", extras=False); out.append(record("clean the house", s, clean(s, "mop")))
    s = living_room(cleaner="rag", extras=False); out.append(record("clean the house", s, clean(s, "rag")))
    s = laundry(); out.append(record("wash clothes", s, wash_clothes(s)))
    s = kitchen(); out.append(record("drink a glass of water", s, drink(s)))
    s = living_room(reading="newspaper"); out.append(record("read the newspaper", s, read(s, "newspaper")))
    s = bedroom(); out.append(record("take a nap", s, nap(s)))
    s = living_room(); out.append(record("switch on the lamp", s, lamp_on(s)))
    s = kitchen(); out.append(record("put milk in the fridge", s, store_food(s, "milk")))
    s = living_room(); out.append(record("sit on the sofa", s, sit_down(s)))
    s = living_room(tv_state="on")
    out.append(record("turn off the tv", s, s.plan([("Walk", "living_room"), ("Walk", "tv"), ("SwitchOff", "tv")])))
    s = kitchen()
    out.append(record("wash the dishes", s, s.plan([
        ("Walk", "kitchen"), ("Walk", "kitchen_counter"), ("Grab", "plate"), ("Walk", "sink"),
        ("SwitchOn", "faucet"), ("PutBack", "plate", "sink"), ("Wipe", "sink"), ("SwitchOff", "faucet")])))
    return out


def validation():
    out = []
    s = living_room(STYLE_B); out.append(record("watch a movie", s, watch(s)))
    s = dining(n_plates=2, n_cups=2); out.append(record("set the table for two", s, set_table(s, rounds=2)))
    s = kitchen(STYLE_B); out.append(record("have a drink", s, drink(s)))
    s = laundry(); out.append(record("load the washing machine", s, wash_clothes(s)))
    s = living_room(STYLE_B, cleaner="rag", extras=False); out.append(record("dust the furniture", s, clean(s, "rag")))
    s = office(); out.append(record("browse the internet", s, computer(s)))
    return out


def test():
    out = []
    s = living_room(STYLE_B); out.append(record("watch television", s, watch(s)))
    s = office(); out.append(record("play video games", s, computer(s)))
    s = dining(); out.append(record("set the table", s, set_table(s)))
    s = living_room(cleaner="rag", extras=False); out.append(record("clean the living room", s, clean(s, "rag")))
    s = laundry(); out.append(record("do the laundry", s, wash_clothes(s)))
    s = kitchen(STYLE_B); out.append(record("get a drink of water", s, drink(s)))
    s = living_room(reading="book"); out.append(record("read a book", s, read(s, "book")))
    s = bedroom(); out.append(record("go to sleep", s, nap(s)))
    s = living_room(); out.append(record("turn on the light", s, lamp_on(s)))
    s = kitchen(food="cheese"); out.append(record("put away the food", s, store_food(s, "cheese")))
    s = living_room(STYLE_B); out.append(record("relax on the couch", s, sit_down(s)))
    s = office(); out.append(record("check email", s, computer(s)))
    return out


def scenes():
    """Standalone scene files for the generate command."""
    return {
        "living_room_b.json": living_room(STYLE_B).graph(),
        "dining.json": dining().graph(),
    }


def write(name, records):
    with open(OUT / name, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    write("examples.jsonl", examples())
    write("validation.jsonl", validation())
    write("test.jsonl", test())
    (OUT / "scenes").mkdir(exist_ok=True)
    for name, graph in scenes().items():
        with open(OUT / "scenes" / name, "w") as f:
            json.dump(graph, f, indent=1)
            f.write("\n")
